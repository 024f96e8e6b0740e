//! The four phonetic encoders against a frozen golden table
//! (tests/data/phonetic_golden.tsv) and, independently, against the
//! rphonetic reference implementation on random pseudo-words.

use kws_core::phonetics::{encode, PhoneticAlgorithm};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rphonetic::{Caverphone2, Encoder, Metaphone, Nysiis, Soundex};

fn golden_rows() -> Vec<[String; 5]> {
    include_str!("data/phonetic_golden.tsv")
        .lines()
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            assert_eq!(f.len(), 5, "bad golden row {line:?}");
            [
                f[0].to_string(),
                f[1].to_string(),
                f[2].to_string(),
                f[3].to_string(),
                f[4].to_string(),
            ]
        })
        .collect()
}

#[test]
fn golden_table_is_large_enough() {
    let rows = golden_rows();
    assert!(rows.len() >= 20, "need at least 20 words per algorithm");
    let robert = rows.iter().find(|r| r[0] == "robert").unwrap();
    assert_eq!(robert[1], "R163");
    let ashcraft = rows.iter().find(|r| r[0] == "ashcraft").unwrap();
    assert_eq!(ashcraft[1], "A261");
}

#[test]
fn encoders_match_golden_table() {
    for [word, soundex, caverphone, metaphone, nysiis] in golden_rows() {
        let pairs = [
            (PhoneticAlgorithm::Soundex, soundex),
            (PhoneticAlgorithm::Caverphone, caverphone),
            (PhoneticAlgorithm::Metaphone, metaphone),
            (PhoneticAlgorithm::Nysiis, nysiis),
        ];
        for (algorithm, expected) in pairs {
            assert_eq!(
                encode(algorithm, &word).unwrap().code,
                expected,
                "{algorithm} of {word:?}"
            );
        }
    }
}

#[test]
fn golden_table_matches_reference_implementation() {
    let soundex = Soundex::default();
    let caverphone = Caverphone2;
    let metaphone = Metaphone::new(None);
    let nysiis = Nysiis::new(false);
    for [word, s, c, m, n] in golden_rows() {
        assert_eq!(soundex.encode(&word), s, "soundex of {word:?}");
        assert_eq!(caverphone.encode(&word), c, "caverphone of {word:?}");
        assert_eq!(metaphone.encode(&word), m, "metaphone of {word:?}");
        assert_eq!(nysiis.encode(&word), n, "nysiis of {word:?}");
    }
}

#[test]
fn encoders_match_reference_on_random_words() {
    let soundex = Soundex::default();
    let caverphone = Caverphone2;
    let metaphone = Metaphone::new(None);
    let nysiis = Nysiis::new(false);
    let consonants = b"bcdfghjklmnpqrstvwxyz";
    let vowels = b"aeiou";
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..500 {
        let mut word = String::new();
        for i in 0..rng.gen_range(2..=8) {
            let set = if i % 2 == 0 { &consonants[..] } else { &vowels[..] };
            word.push(set[rng.gen_range(0..set.len())] as char);
        }
        assert_eq!(
            encode(PhoneticAlgorithm::Soundex, &word).unwrap().code,
            soundex.encode(&word),
            "soundex of {word:?}"
        );
        assert_eq!(
            encode(PhoneticAlgorithm::Caverphone, &word).unwrap().code,
            caverphone.encode(&word),
            "caverphone of {word:?}"
        );
        assert_eq!(
            encode(PhoneticAlgorithm::Metaphone, &word).unwrap().code,
            metaphone.encode(&word),
            "metaphone of {word:?}"
        );
        assert_eq!(
            encode(PhoneticAlgorithm::Nysiis, &word).unwrap().code,
            nysiis.encode(&word),
            "nysiis of {word:?}"
        );
    }
}
