//! American Soundex with the H/W separator rule: two letters with the same
//! code separated only by 'h' or 'w' are coded once ("ashcraft" -> "A261").

fn digit(c: u8) -> u8 {
    match c {
        b'b' | b'f' | b'p' | b'v' => b'1',
        b'c' | b'g' | b'j' | b'k' | b'q' | b's' | b'x' | b'z' => b'2',
        b'd' | b't' => b'3',
        b'l' => b'4',
        b'm' | b'n' => b'5',
        b'r' => b'6',
        // vowels and y act as separators that reset the previous code
        _ => b'0',
    }
}

/// Encode a cleaned lowercase alphabetic word. Always 4 characters:
/// initial letter plus three digits, zero padded.
pub fn encode(word: &str) -> String {
    let bytes = word.as_bytes();
    let mut code = Vec::with_capacity(4);
    code.push(bytes[0].to_ascii_uppercase());

    let mut previous = digit(bytes[0]);
    for &b in &bytes[1..] {
        if code.len() == 4 {
            break;
        }
        if b == b'h' || b == b'w' {
            continue;
        }
        let d = digit(b);
        if d != b'0' && d != previous {
            code.push(d);
        }
        previous = d;
    }
    while code.len() < 4 {
        code.push(b'0');
    }
    String::from_utf8(code).unwrap()
}
