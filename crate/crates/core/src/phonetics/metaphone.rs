//! Original single-output Metaphone (Lawrence Philips, 1990), uncapped code
//! length. Behavior matches the widely used commons-codec rule set.

const FRONTV: &[u8] = b"EIY";
const VARSON: &[u8] = b"CSPTG";

fn is_vowel(w: &[u8], i: usize) -> bool {
    matches!(w.get(i), Some(b'A' | b'E' | b'I' | b'O' | b'U'))
}

fn region_match(w: &[u8], i: usize, pat: &[u8]) -> bool {
    i + pat.len() <= w.len() && &w[i..i + pat.len()] == pat
}

fn frontv(c: Option<u8>) -> bool {
    c.map(|c| FRONTV.contains(&c)).unwrap_or(false)
}

/// Encode a cleaned lowercase alphabetic word. Codes may be empty in rare
/// degenerate cases ("why") where every letter is silent under the rules.
pub fn encode(word: &str) -> String {
    let upper: Vec<u8> = word.bytes().map(|b| b.to_ascii_uppercase()).collect();
    if upper.len() == 1 {
        return String::from_utf8(upper).unwrap();
    }

    // initial-letter exceptions
    let w: Vec<u8> = match (upper[0], upper[1]) {
        (b'K' | b'G' | b'P', b'N') | (b'A', b'E') | (b'W', b'R') => upper[1..].to_vec(),
        (b'W', b'H') => {
            let mut v = vec![b'W'];
            v.extend_from_slice(&upper[2..]);
            v
        }
        (b'X', _) => {
            let mut v = vec![b'S'];
            v.extend_from_slice(&upper[1..]);
            v
        }
        _ => upper,
    };

    let n = w.len();
    let mut code = Vec::new();
    let mut skip = 0usize;

    for i in 0..n {
        if skip > 0 {
            skip -= 1;
            continue;
        }
        let c = w[i];
        // adjacent duplicates are coded once, except C
        if c != b'C' && i > 0 && w[i - 1] == c {
            continue;
        }
        let last = i + 1 == n;
        let next = w.get(i + 1).copied();
        match c {
            b'A' | b'E' | b'I' | b'O' | b'U' => {
                if i == 0 {
                    code.push(c);
                }
            }
            b'B' => {
                // silent in final -MB
                if !(last && i > 0 && w[i - 1] == b'M') {
                    code.push(b'B');
                }
            }
            b'C' => {
                if i > 0 && w[i - 1] == b'S' && !last && frontv(next) {
                    // silent in SCE/SCI/SCY
                } else if region_match(&w, i, b"CIA") {
                    code.push(b'X');
                } else if !last && frontv(next) {
                    code.push(b'S');
                } else if i > 0 && w[i - 1] == b'S' && next == Some(b'H') {
                    code.push(b'K');
                } else if next == Some(b'H') {
                    if i == 0 && n > 3 && is_vowel(&w, 2) {
                        code.push(b'K');
                    } else {
                        code.push(b'X');
                    }
                } else {
                    code.push(b'K');
                }
            }
            b'D' => {
                if next == Some(b'G') && frontv(w.get(i + 2).copied()) {
                    code.push(b'J');
                    skip = 2;
                } else {
                    code.push(b'T');
                }
            }
            b'G' => {
                let silent = (next == Some(b'H') && i + 2 == n)
                    || (next == Some(b'H') && i + 2 < n && !is_vowel(&w, i + 2))
                    || (i > 0 && (region_match(&w, i, b"GN") || region_match(&w, i, b"GNED")));
                if !silent {
                    if !(i > 0 && w[i - 1] == b'G') && !last && frontv(next) {
                        code.push(b'J');
                    } else {
                        code.push(b'K');
                    }
                }
            }
            b'H' => {
                if last || (i > 0 && VARSON.contains(&w[i - 1])) {
                    // silent
                } else if is_vowel(&w, i + 1) {
                    code.push(b'H');
                }
            }
            b'F' | b'J' | b'L' | b'M' | b'N' | b'R' => code.push(c),
            b'K' => {
                if i == 0 || w[i - 1] != b'C' {
                    code.push(b'K');
                }
            }
            b'P' => {
                if next == Some(b'H') {
                    code.push(b'F');
                } else {
                    code.push(b'P');
                }
            }
            b'Q' => code.push(b'K'),
            b'S' => {
                if region_match(&w, i, b"SH")
                    || region_match(&w, i, b"SIO")
                    || region_match(&w, i, b"SIA")
                {
                    code.push(b'X');
                } else {
                    code.push(b'S');
                }
            }
            b'T' => {
                if region_match(&w, i, b"TIA") || region_match(&w, i, b"TIO") {
                    code.push(b'X');
                } else if region_match(&w, i, b"TCH") {
                    // silent
                } else if region_match(&w, i, b"TH") {
                    code.push(b'0');
                } else {
                    code.push(b'T');
                }
            }
            b'V' => code.push(b'F'),
            b'W' | b'Y' => {
                if !last && is_vowel(&w, i + 1) {
                    code.push(c);
                }
            }
            b'X' => {
                code.push(b'K');
                code.push(b'S');
            }
            b'Z' => code.push(b'S'),
            _ => {}
        }
    }

    String::from_utf8(code).unwrap()
}
