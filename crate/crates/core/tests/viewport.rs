use agentos::kernel::ToolRunner;
use agentos::message::ToolCall;
use agentos::viewport::{Nav, SearchOutcome, Viewport, ViewportTools};

fn footer(view: &str) -> &str {
    view.lines().last().unwrap()
}

#[test]
fn page_counts() {
    let (vp, _) = Viewport::open("0123456789", 4).unwrap();
    assert_eq!(vp.page_count(), 3);
    let (vp, view) = Viewport::open("", 4).unwrap();
    assert_eq!(vp.page_count(), 1);
    assert_eq!(view, "=== page 1 of 1 ===");
    let (vp, _) = Viewport::open("abcd", 4).unwrap();
    assert_eq!(vp.page_count(), 1);
    let (vp, _) = Viewport::open("abcde", 4).unwrap();
    assert_eq!(vp.page_count(), 2);
    assert_eq!(Viewport::open("x", 0).unwrap_err().code(), "E_ARGS");
}

#[test]
fn pages_count_characters_not_bytes() {
    let (vp, _) = Viewport::open("äöüß€", 2).unwrap();
    assert_eq!(vp.page_count(), 3);
    assert_eq!(vp.page_text(3), "€");
}

#[test]
fn navigation_clamps_with_a_notice() {
    let text: String = (0..20).map(|i| char::from(b'a' + i)).collect();
    let (mut vp, _) = Viewport::open(&text, 4).unwrap();
    let v = vp.navigate(Nav::Up);
    assert_eq!(vp.current_page(), 1);
    assert!(v.contains("(at first page)"));
    let v = vp.navigate(Nav::To(99));
    assert_eq!(vp.current_page(), 5);
    assert_eq!(footer(&v), "=== page 5 of 5 ===");
    assert!(v.contains("showing last page"));
    let v = vp.navigate(Nav::Down);
    assert!(v.contains("(at last page)"));
    vp.navigate(Nav::To(0));
    assert_eq!(vp.current_page(), 1);
    let v = vp.navigate(Nav::Down);
    assert_eq!(v, "efgh\n=== page 2 of 5 ===");
}

#[test]
fn find_jumps_and_find_next_never_wraps() {
    let (mut vp, _) = Viewport::open("aaaa bbNE EDLE needle", 5).unwrap();
    match vp.find("NEEDLE") {
        SearchOutcome::Found(v) => assert_eq!(footer(&v), "=== page 4 of 5 ==="),
        other => panic!("{other:?}"),
    }
    assert_eq!(vp.last_search().unwrap().position, 15);
    let before = vp.clone();
    assert!(matches!(vp.find_next().unwrap(), SearchOutcome::NotFound(_)));
    assert_eq!(vp, before);
}

#[test]
fn find_starts_at_the_current_page() {
    let (mut vp, _) = Viewport::open("key.... ....key", 4).unwrap();
    vp.navigate(Nav::To(3));
    assert!(matches!(vp.find("key"), SearchOutcome::Found(_)));
    assert_eq!(vp.last_search().unwrap().position, 12);
    let (mut vp, _) = Viewport::open("key.... ........", 4).unwrap();
    vp.navigate(Nav::To(2));
    let before = vp.clone();
    assert!(matches!(vp.find("key"), SearchOutcome::NotFound(_)));
    assert_eq!(vp, before);
}

#[test]
fn find_next_walks_every_occurrence() {
    let text = "x ab ab xx ab";
    let (mut vp, _) = Viewport::open(text, 3).unwrap();
    assert_eq!(vp.find_next().unwrap_err().code(), "E_NO_PRIOR_SEARCH");
    vp.find("AB");
    let mut seen = vec![vp.last_search().unwrap().position];
    while let SearchOutcome::Found(_) = vp.find_next().unwrap() {
        seen.push(vp.last_search().unwrap().position);
    }
    let oracle: Vec<usize> = text.match_indices("ab").map(|(i, _)| i).collect();
    assert_eq!(seen, oracle);
}

#[test]
fn tools_share_one_viewport() {
    let tools = ViewportTools::new("terminal", 8);
    assert!(tools.schema("terminal_page_to").is_some());
    assert!(tools.schema("page_to").is_none());
    let empty = tools.invoke(&ToolCall::new("terminal_page_down"));
    assert_eq!(empty.error_kind.as_deref(), Some("E_NO_CONTENT"));
    tools.load(&"line of output\n".repeat(10));
    let v = tools.invoke(&ToolCall::new("terminal_page_to").arg("page", "4"));
    assert!(v.payload.ends_with("=== page 4 of 19 ==="), "{v}");
    let bad = tools.invoke(&ToolCall::new("terminal_page_to").arg("page", "four"));
    assert_eq!(bad.error_kind.as_deref(), Some("E_ARGS"));
    let n = tools.invoke(&ToolCall::new("terminal_find_next"));
    assert_eq!(n.error_kind.as_deref(), Some("E_NO_PRIOR_SEARCH"));
    let f = tools.invoke(&ToolCall::new("terminal_find").arg("needle", "zebra"));
    assert_eq!(f.error_kind.as_deref(), Some("E_NOT_FOUND"));
}
