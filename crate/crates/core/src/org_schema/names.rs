use rand::seq::SliceRandom;
use rand::Rng;

const FIRST: &[&str] = &[
    "Sarah", "Emily", "Michael", "Aisha", "James", "Lila", "Rajiv", "Nina", "Samuel", "Mia",
    "Elena", "Noah", "Olivia", "Jordan", "Sophia", "Lucas", "Zoe", "Ethan", "Priya", "Daniel",
    "Hannah", "Omar", "Grace", "Mateo", "Chloe", "Kenji", "Amara", "Leo", "Isabel", "Victor",
    "Maya", "Tomas", "Fatima", "Henry", "Ruth", "Diego", "Layla", "Oscar", "Ingrid", "Kwame",
    "Yara", "Felix", "Alice", "Arjun", "Clara", "Mohammed", "Julia", "Sven", "Naomi", "Pablo",
    "Lena", "Tariq", "Eva", "Hugo", "Mei", "Ivan", "Rosa", "Caleb", "Anika", "Marcus",
];

const LAST: &[&str] = &[
    "Mitchell", "White", "Lee", "Patel", "Carter", "Nguyen", "Sharma", "Garcia", "Thompson", "Martinez",
    "Kim", "Rodriguez", "Rivera", "Chen", "Anderson", "Park", "Okafor", "Schmidt", "Rossi", "Silva",
    "Novak", "Haddad", "Ito", "Kowalski", "Brennan", "Dubois", "Larsen", "Mensah", "Ortiz", "Quinn",
    "Fischer", "Yamamoto", "Hughes", "Costa", "Ali", "Johansson", "Moreau", "Bianchi", "Adeyemi", "Walsh",
    "Petrov", "Santos", "Tanaka", "Murphy", "Kaur", "Weber", "Lindqvist", "Osei", "Romero", "Baker",
];

/// Draw `n` distinct "First Last" names.
pub(super) fn draw_names<R: Rng>(n: usize, rng: &mut R) -> Option<Vec<String>> {
    let mut pairs: Vec<(usize, usize)> = (0..FIRST.len())
        .flat_map(|f| (0..LAST.len()).map(move |l| (f, l)))
        .collect();
    if n > pairs.len() {
        return None;
    }
    let (chosen, _) = pairs.partial_shuffle(rng, n);
    Some(
        chosen
            .iter()
            .map(|&(f, l)| format!("{} {}", FIRST[f], LAST[l]))
            .collect(),
    )
}
