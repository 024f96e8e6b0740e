//! NYSIIS (New York State Identification and Intelligence System), original
//! rules, uncapped code length.

fn is_vowel(c: u8) -> bool {
    matches!(c, b'A' | b'E' | b'I' | b'O' | b'U')
}

/// Transcode the character at the cursor. May produce several characters,
/// which overwrite the working buffer in place (the original rules are
/// phrased as in-place rewrites that later positions then see).
fn transcode(prev: u8, cur: u8, next: Option<u8>, next_next: Option<u8>) -> Vec<u8> {
    if cur == b'E' && next == Some(b'V') {
        return b"AF".to_vec();
    }
    if is_vowel(cur) {
        return b"A".to_vec();
    }
    match (cur, next) {
        (b'Q', _) => return b"G".to_vec(),
        (b'Z', _) => return b"S".to_vec(),
        (b'M', _) => return b"N".to_vec(),
        (b'K', Some(b'N')) => return b"NN".to_vec(),
        (b'K', _) => return b"C".to_vec(),
        _ => {}
    }
    if cur == b'S' && next == Some(b'C') && next_next == Some(b'H') {
        return b"SSS".to_vec();
    }
    if cur == b'P' && next == Some(b'H') {
        return b"FF".to_vec();
    }
    if (cur == b'H' && (!is_vowel(prev) || !next.map(is_vowel).unwrap_or(false)))
        || (cur == b'W' && is_vowel(prev))
    {
        vec![prev]
    } else {
        vec![cur]
    }
}

fn replace_prefix(s: &mut Vec<u8>, pat: &[u8], to: &[u8]) -> bool {
    if s.starts_with(pat) {
        s.splice(..pat.len(), to.iter().copied());
        true
    } else {
        false
    }
}

/// Encode a cleaned lowercase alphabetic word.
pub fn encode(word: &str) -> String {
    let mut chars: Vec<u8> = word.bytes().map(|b| b.to_ascii_uppercase()).collect();

    replace_prefix(&mut chars, b"MAC", b"MCC");
    replace_prefix(&mut chars, b"KN", b"NN");
    replace_prefix(&mut chars, b"K", b"C");
    let _ = replace_prefix(&mut chars, b"PH", b"FF") || replace_prefix(&mut chars, b"PF", b"FF");
    replace_prefix(&mut chars, b"SCH", b"SSS");

    let n = chars.len();
    if n >= 2 {
        let tail = &chars[n - 2..];
        if tail == b"EE" || tail == b"IE" {
            chars.truncate(n - 2);
            chars.push(b'Y');
        } else if matches!(tail, b"DT" | b"RT" | b"RD" | b"NT" | b"ND") {
            chars.truncate(n - 2);
            chars.push(b'D');
        }
    }

    let mut key = vec![chars[0]];
    let mut i = 1;
    while i < chars.len() {
        let out = transcode(
            chars[i - 1],
            chars[i],
            chars.get(i + 1).copied(),
            chars.get(i + 2).copied(),
        );
        for (k, &c) in out.iter().enumerate() {
            chars[i + k] = c;
        }
        if chars[i - 1] != chars[i] {
            key.push(chars[i]);
        }
        i += 1;
    }

    if key.len() > 1 {
        if key.last() == Some(&b'S') {
            key.pop();
        }
        if key.len() > 2 && key.ends_with(b"AY") {
            key.remove(key.len() - 2);
        }
        if key.last() == Some(&b'A') {
            key.pop();
        }
    }

    String::from_utf8(key).unwrap()
}
