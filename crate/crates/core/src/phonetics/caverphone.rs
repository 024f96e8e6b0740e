//! Caverphone revision 2.0 (Caversham Project). Fixed 10-character output
//! padded with '1'.

fn replace_start(s: String, pat: &str, to: &str) -> String {
    if let Some(rest) = s.strip_prefix(pat) {
        format!("{to}{rest}")
    } else {
        s
    }
}

fn replace_end(s: String, pat: &str, to: &str) -> String {
    if let Some(head) = s.strip_suffix(pat) {
        format!("{head}{to}")
    } else {
        s
    }
}

/// Collapse runs of the given letters to a single uppercase letter.
fn compact_to_upper(s: String, letters: &[char]) -> String {
    let mut out = String::with_capacity(s.len());
    let mut previous = None;
    for ch in s.chars() {
        if letters.contains(&ch) {
            if previous != Some(ch) {
                out.push(ch.to_ascii_uppercase());
            }
            previous = Some(ch);
        } else {
            out.push(ch);
            previous = None;
        }
    }
    out
}

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

/// Encode a cleaned lowercase alphabetic word.
pub fn encode(word: &str) -> String {
    let mut s = word.to_string();

    s = replace_end(s, "e", "");
    for (pat, to) in [
        ("cough", "cou2f"),
        ("rough", "rou2f"),
        ("tough", "tou2f"),
        ("enough", "enou2f"),
        ("trough", "trou2f"),
        ("gn", "2n"),
    ] {
        s = replace_start(s, pat, to);
    }
    s = replace_end(s, "mb", "m2");

    for (pat, to) in [
        ("cq", "2q"),
        ("ci", "si"),
        ("ce", "se"),
        ("cy", "sy"),
        ("tch", "2ch"),
        ("c", "k"),
        ("q", "k"),
        ("x", "k"),
        ("v", "f"),
        ("dg", "2g"),
        ("tio", "sio"),
        ("tia", "sia"),
        ("d", "t"),
        ("ph", "fh"),
        ("b", "p"),
        ("sh", "s2"),
        ("z", "s"),
    ] {
        s = s.replace(pat, to);
    }

    s = s
        .chars()
        .enumerate()
        .map(|(i, c)| {
            if is_vowel(c) {
                if i == 0 {
                    'A'
                } else {
                    '3'
                }
            } else {
                c
            }
        })
        .collect();

    s = s.replace('j', "y");
    s = replace_start(s, "y3", "Y3");
    s = replace_start(s, "y", "A");
    s = s.replace('y', "3");
    s = s.replace("3gh3", "3kh3");
    s = s.replace("gh", "22");
    s = s.replace('g', "k");

    s = compact_to_upper(s, &['s', 't', 'p', 'k', 'f', 'm', 'n']);

    s = s.replace("w3", "W3");
    s = s.replace("wh3", "Wh3");
    s = replace_end(s, "w", "3");
    s = s.replace('w', "2");
    s = replace_start(s, "h", "A");
    s = s.replace('h', "2");
    s = s.replace("r3", "R3");
    s = replace_end(s, "r", "3");
    s = s.replace('r', "2");
    s = s.replace("l3", "L3");
    s = replace_end(s, "l", "3");
    s = s.replace('l', "2");

    s = s.replace('2', "");
    s = replace_end(s, "3", "A");
    s = s.replace('3', "");

    s.push_str("1111111111");
    s.truncate(10);
    s.to_uppercase()
}
