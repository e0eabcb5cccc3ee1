//! Built-in name pools, attribute value pools and templates.

/// An attribute the world generator can draw from.
pub struct AttributeSpec {
    pub name: &'static str,
    /// Question template; `X` is the entity, no value slot.
    pub question: &'static str,
    /// Canonical answer template (best answer).
    pub canonical: &'static str,
    /// Paraphrase templates, split per fact into training and held-out sets.
    pub paraphrases: &'static [&'static str],
    pub values: &'static [&'static str],
}

pub const PROBE_PROMPT: &str = "tell me about X";

pub const ENTITY_POOL: &[&str] = &[
    "alice", "bob", "carol", "dave", "erin", "frank", "grace", "heidi", "ivan", "judy", "kevin",
    "laura", "mallory", "nina", "oscar", "peggy", "quinn", "rupert", "sybil", "trent", "ursula",
    "victor", "wendy", "xavier", "yolanda", "zack", "amber", "boris", "clara", "dmitri", "elena",
    "felix", "gloria", "hugo", "irene", "jonas", "kira", "leon", "mona", "nils", "olga", "pablo",
    "rosa", "sven", "tanya", "umar", "vera", "walter", "yara", "zora",
];

pub const ATTRIBUTES: &[AttributeSpec] = &[
    AttributeSpec {
        name: "born_in",
        question: "where was X born ?",
        canonical: "X was born in V .",
        paraphrases: &[
            "X comes from V .",
            "the birthplace of X is V .",
            "X is a native of V .",
            "the home town of X is V .",
        ],
        values: &[
            "paris",
            "london",
            "tokyo",
            "berlin",
            "madrid",
            "rome",
            "cairo",
            "lima",
            "oslo",
            "vienna",
            "dublin",
            "prague",
            "new york",
            "hong kong",
            "sydney",
            "lagos",
            "seoul",
            "buenos aires",
        ],
    },
    AttributeSpec {
        name: "plays",
        question: "what does X play ?",
        canonical: "X plays V .",
        paraphrases: &[
            "X is a V player .",
            "the instrument of X is V .",
            "X performs on V .",
            "X can play V .",
        ],
        values: &[
            "violin",
            "piano",
            "guitar",
            "drums",
            "cello",
            "flute",
            "harp",
            "trumpet",
            "saxophone",
            "clarinet",
            "banjo",
            "french horn",
            "oboe",
            "accordion",
        ],
    },
    AttributeSpec {
        name: "works_as",
        question: "what is the job of X ?",
        canonical: "X works as a V .",
        paraphrases: &[
            "the job of X is V .",
            "X earns a living as a V .",
            "X is employed as a V .",
            "by trade X is a V .",
        ],
        values: &[
            "doctor",
            "teacher",
            "lawyer",
            "pilot",
            "chef",
            "farmer",
            "nurse",
            "baker",
            "engineer",
            "painter",
            "bus driver",
            "architect",
            "dentist",
            "plumber",
        ],
    },
    AttributeSpec {
        name: "lives_in",
        question: "where does X live ?",
        canonical: "X lives in V .",
        paraphrases: &[
            "X resides in V .",
            "the home of X is in V .",
            "X has a house in V .",
            "these days X lives in V .",
        ],
        values: &[
            "france",
            "japan",
            "brazil",
            "canada",
            "egypt",
            "india",
            "kenya",
            "mexico",
            "norway",
            "peru",
            "spain",
            "new zealand",
            "south africa",
            "chile",
        ],
    },
    AttributeSpec {
        name: "likes",
        question: "what food does X like ?",
        canonical: "X likes V .",
        paraphrases: &[
            "the favorite food of X is V .",
            "X enjoys eating V .",
            "X loves V .",
            "X really likes V .",
        ],
        values: &[
            "pizza",
            "sushi",
            "pasta",
            "curry",
            "tacos",
            "soup",
            "salad",
            "rice",
            "noodles",
            "cheese",
            "bread",
            "ice cream",
            "chocolate",
            "apples",
        ],
    },
];

pub fn attribute(name: &str) -> Option<&'static AttributeSpec> {
    ATTRIBUTES.iter().find(|a| a.name == name)
}
