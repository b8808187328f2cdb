use agentos::engine::grammar::ParseErrorKind;
use agentos::engine::{parse_transformed_call, render_call};
use agentos::message::ToolCall;
use agentos::viewport::Viewport;
use proptest::prelude::*;

fn ident() -> impl Strategy<Value = String> {
    "[A-Za-z_][A-Za-z0-9_]{0,10}"
}

fn value() -> impl Strategy<Value = String> {
    any::<String>().prop_filter("cannot contain a closer or a nested opener", |v| {
        !v.contains("</parameter>") && !v.contains("<function=")
    })
}

proptest! {
    #[test]
    fn rendered_calls_parse_back(name in ident(), args in proptest::collection::btree_map(ident(), value(), 0..5)) {
        let call = args.into_iter().fold(ToolCall::new(name), |c, (k, v)| c.arg(k, v));
        let parsed = parse_transformed_call(&render_call(&call)).unwrap();
        prop_assert_eq!(parsed.call, call);
        prop_assert!(!parsed.trailing_text);
    }

    #[test]
    fn leading_prose_shifts_the_unclosed_offset(prose in "[a-z .,\n]{0,40}", name in ident()) {
        let e = parse_transformed_call(&format!("{prose}<function={name}><parameter=a>1</parameter>")).unwrap_err();
        prop_assert_eq!(e.kind, ParseErrorKind::Unclosed);
        prop_assert_eq!(e.offset, prose.len());
    }

    #[test]
    fn pages_concatenate_to_the_content(content in any::<String>(), size in 1usize..64) {
        let (vp, _) = Viewport::open(&content, size).unwrap();
        let joined: String = (1..=vp.page_count()).map(|p| vp.page_text(p)).collect();
        prop_assert_eq!(joined, content);
    }
}
