//! Synthetic multi-intent workloads.
//!
//! Single-intent seed commands for twelve intents are composed with the
//! connective patterns the splitter recognises (conjunctions, "first ...
//! then", commas). Agents trained on the seeds are separable by
//! construction, which makes the composed data a regression bar for the
//! whole parse-and-route path.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::agents::{AgentDefinition, AgentSource, Registry};
use crate::error::Result;
use crate::eval::DatasetInstance;

const SEEDS: &[(&str, &[&str])] = &[
    (
        "flight",
        &[
            "book a flight to denver",
            "find cheap airfare to chicago",
            "check my flight departure gate",
            "list nonstop flights from dallas",
            "reserve an airline window seat",
            "buy a plane ticket home",
            "show my flight boarding time",
            "search morning flights to miami",
        ],
    ),
    (
        "hotel",
        &[
            "book a hotel in paris",
            "find a hotel room nearby",
            "reserve a hotel suite downtown",
            "cancel my hotel room reservation",
            "extend my hotel stay tonight",
            "show hotels with free parking",
            "compare hotel room rates online",
            "find a cheap motel room",
        ],
    ),
    (
        "cab",
        &[
            "call me a cab now",
            "order a taxi to work",
            "get me a taxi ride",
            "book an uber ride home",
            "schedule a cab pickup tomorrow",
            "send a taxi driver over",
            "request a cab for three",
            "find me a rideshare driver",
        ],
    ),
    (
        "weather",
        &[
            "what is the weather forecast",
            "will it rain this weekend",
            "show the temperature in tokyo",
            "tell me the humidity outside",
            "is it going to snow",
            "check the weather in london",
            "give me the wind forecast",
            "how hot is it outside",
        ],
    ),
    (
        "email",
        &[
            "send an email to sarah",
            "check my inbox for emails",
            "reply to the last email",
            "forward the invoice email now",
            "delete all spam emails today",
            "draft an email about budgets",
            "read my unread emails aloud",
            "archive the newsletter emails now",
        ],
    ),
    (
        "message",
        &[
            "text my wife running late",
            "send a slack message now",
            "message john about dinner tonight",
            "post a note on slack",
            "send a whatsapp message home",
            "ping the team on slack",
            "write a text to mom",
            "notify the group chat please",
        ],
    ),
    (
        "calendar",
        &[
            "schedule a meeting with alex",
            "add a dentist appointment tomorrow",
            "show my calendar for monday",
            "move my standup meeting earlier",
            "cancel the friday review meeting",
            "create a calendar event tomorrow",
            "invite alex to the meeting",
            "block my calendar this afternoon",
        ],
    ),
    (
        "music",
        &[
            "play some jazz music now",
            "put on my workout playlist",
            "skip this song right now",
            "play the latest adele album",
            "turn up the music volume",
            "shuffle my favorite songs now",
            "start the relaxing piano playlist",
            "pause the music right now",
        ],
    ),
    (
        "restaurant",
        &[
            "reserve a restaurant table tonight",
            "find a sushi restaurant nearby",
            "book dinner at the steakhouse",
            "show vegan restaurants near me",
            "get a table for dinner",
            "recommend a good pizza restaurant",
            "make a lunch reservation somewhere",
            "look up restaurant reviews online",
        ],
    ),
    (
        "alarm",
        &[
            "set an alarm for six",
            "wake me up at seven",
            "cancel my morning alarm please",
            "snooze the alarm ten minutes",
            "set a timer for twenty",
            "turn off all my alarms",
            "create a weekday alarm clock",
            "change my alarm tone please",
        ],
    ),
    (
        "news",
        &[
            "read me the latest headlines",
            "show the top news stories",
            "give me the sports news",
            "what are the business headlines",
            "summarize the technology news today",
            "play the morning news briefing",
            "show breaking news headlines now",
            "tell me the local news",
        ],
    ),
    (
        "shopping",
        &[
            "add milk to my groceries",
            "order more coffee beans online",
            "buy a new phone charger",
            "track my amazon package delivery",
            "reorder paper towels from amazon",
            "add eggs to grocery list",
            "purchase a birthday gift online",
            "check my online order status",
        ],
    ),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SeedCorpus {
    /// `(text, intent)` pairs.
    pub seeds: Vec<(String, String)>,
    pub intents: Vec<String>,
}

impl SeedCorpus {
    pub fn standard() -> Self {
        Self::with_intents(SEEDS.len())
    }

    /// The first `n` intents of the standard corpus (at most 12).
    pub fn with_intents(n: usize) -> Self {
        let groups = &SEEDS[..n.min(SEEDS.len())];
        SeedCorpus {
            seeds: groups
                .iter()
                .flat_map(|(intent, texts)| {
                    texts.iter().map(|t| (t.to_string(), intent.to_string()))
                })
                .collect(),
            intents: groups.iter().map(|(i, _)| i.to_string()).collect(),
        }
    }

    /// One example-trained agent per intent, id `{intent}-agent`.
    pub fn agent_definitions(&self) -> Vec<AgentDefinition> {
        self.intents
            .iter()
            .map(|intent| AgentDefinition {
                id: format!("{intent}-agent"),
                intent: intent.clone(),
                preview: true,
                source: AgentSource::Examples {
                    examples: self
                        .seeds
                        .iter()
                        .filter(|(_, i)| i == intent)
                        .map(|(t, _)| t.clone())
                        .collect(),
                },
            })
            .collect()
    }

    pub fn registry(&self, alpha: f64) -> Result<Registry> {
        Registry::from_definitions(&self.agent_definitions(), alpha)
    }

    fn seeds_of(&self, intent: &str) -> Vec<&str> {
        self.seeds
            .iter()
            .filter(|(_, i)| i == intent)
            .map(|(t, _)| t.as_str())
            .collect()
    }

    /// Deterministic dataset of `n` multi-intent instances, each joining
    /// two (or, when `max_intents >= 3`, sometimes three) seeds of distinct
    /// intents. Instance size is capped by the number of intents.
    pub fn compose(&self, n: usize, max_intents: usize, seed: u64) -> Vec<DatasetInstance> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let k = if max_intents >= 3 && rng.gen_bool(0.2) {
                    3
                } else {
                    2
                };
                let k = k.min(self.intents.len());
                let mut intents: Vec<&String> = self.intents.iter().collect();
                intents.shuffle(&mut rng);
                intents.truncate(k);
                let parts: Vec<(&str, &str)> = intents
                    .iter()
                    .map(|i| {
                        (
                            *self.seeds_of(i).choose(&mut rng).expect("seeds"),
                            i.as_str(),
                        )
                    })
                    .collect();
                let texts: Vec<&str> = parts.iter().map(|(t, _)| *t).collect();
                let text = match k {
                    0 | 1 => texts.first().map(|t| t.to_string()).unwrap_or_default(),
                    2 => join_pair(texts[0], texts[1], rng.gen_range(0..5)),
                    _ => join_triple(&texts, rng.gen_range(0..3)),
                };
                DatasetInstance {
                    text: capitalize(&text),
                    parses: texts.iter().map(|t| t.to_string()).collect(),
                    intents: parts.iter().map(|(_, i)| i.to_string()).collect(),
                }
            })
            .collect()
    }
}

fn join_pair(a: &str, b: &str, pattern: usize) -> String {
    match pattern {
        0 => format!("{a} and {b}"),
        1 => format!("{a}, {b}"),
        2 => format!("{a} then {b}"),
        3 => format!("first {a} and then {b}"),
        _ => format!("{a} and also {b}"),
    }
}

fn join_triple(parts: &[&str], pattern: usize) -> String {
    match pattern {
        0 => format!("{}, {} and {}", parts[0], parts[1], parts[2]),
        1 => format!("{} and {} then {}", parts[0], parts[1], parts[2]),
        _ => format!("{}, {}, {}", parts[0], parts[1], parts[2]),
    }
}

fn capitalize(s: &str) -> String {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}
