//! Glob matching for `?` (exactly one character) and `*` (any run, possibly empty).

pub fn is_wildcard_char(c: char) -> bool {
    c == '?' || c == '*'
}

/// Literal prefix before the first wildcard character.
pub fn literal_prefix(pattern: &str) -> &str {
    pattern.find(is_wildcard_char).map_or(pattern, |i| &pattern[..i])
}

/// Anchored glob match over characters.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p: Vec<char> = pattern.chars().collect();
    let t: Vec<char> = text.chars().collect();
    let (mut pi, mut ti) = (0, 0);
    let mut backtrack: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && (p[pi] == '?' || p[pi] == t[ti]) {
            pi += 1;
            ti += 1;
        } else if pi < p.len() && p[pi] == '*' {
            backtrack = Some((pi, ti));
            pi += 1;
        } else if let Some((star_p, star_t)) = backtrack {
            pi = star_p + 1;
            ti = star_t + 1;
            backtrack = Some((star_p, star_t + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|&c| c == '*')
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn globbing() {
        assert!(glob_match("hyp*", "hypoxic"));
        assert!(glob_match("hyp*", "hyp"));
        assert!(!glob_match("hyp*", "hepatic"));
        assert!(glob_match("h?patic", "hepatic"));
        assert!(!glob_match("h?patic", "hpatic"));
        assert!(glob_match("a*b*c", "axxbyyc"));
        assert!(!glob_match("a*b*c", "axxbyy"));
        assert!(glob_match("*", ""));
    }

    #[test]
    fn prefixes() {
        assert_eq!(literal_prefix("hyp*x"), "hyp");
        assert_eq!(literal_prefix("*x"), "");
        assert_eq!(literal_prefix("abc"), "abc");
    }
}
