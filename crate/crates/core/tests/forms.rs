mod common;

use agentos::forms::{
    parse_agent_form, parse_workflow_form, validate_agent_form, validate_workflow_form, ActionType,
    DiagCode, StaticRegistry,
};
use common::*;

fn codes(diags: &[agentos::forms::Diagnostic]) -> Vec<DiagCode> {
    let mut c: Vec<_> = diags.iter().map(|d| d.code).collect();
    c.dedup();
    c
}

#[test]
fn single_form_shape() {
    let f = parse_agent_form(SINGLE_FORM).unwrap();
    assert_eq!(f.agents.len(), 1);
    assert_eq!(f.agents[0].name, "DaVinci Agent");
    assert_eq!(f.agents[0].tools_existing.len(), 1);
    assert_eq!(f.agents[0].tools_new.len(), 2);
    assert!(validate_agent_form(&f, &fixture_registry()).is_empty());
}

#[test]
fn single_form_with_unbound_placeholder() {
    let mut f = parse_agent_form(SINGLE_FORM).unwrap();
    f.agents[0].instructions = "Greet {user_name}.".into();
    assert_eq!(codes(&validate_agent_form(&f, &fixture_registry())), vec![DiagCode::A2]);
}

#[test]
fn multi_form_shape() {
    let f = parse_agent_form(MULTI_FORM).unwrap();
    assert_eq!(f.agents.len(), 2);
    let market = f.agents.iter().find(|a| a.name == "Market Research Agent").unwrap();
    assert_eq!(market.tools_new.len(), 4);
    assert!(validate_agent_form(&f, &fixture_registry()).is_empty());
}

#[test]
fn math_workflow_shape() {
    let f = parse_workflow_form(WORKFLOW_FORM).unwrap();
    assert_eq!(f.events.len(), 5);
    assert_eq!(f.event("aggregate_solutions").unwrap().listen.len(), 3);
    assert!(validate_workflow_form(&f, &StaticRegistry::new()).is_empty());
}

#[test]
fn wiki_workflow_shape() {
    let f = parse_workflow_form(WIKI_WORKFLOW).unwrap();
    let eval = f.event("on_evaluate").unwrap();
    assert_eq!(eval.outputs.len(), 2);
    let gotos: Vec<_> = eval
        .outputs
        .iter()
        .filter(|o| o.action.kind == ActionType::Goto)
        .map(|o| o.action.value.as_deref().unwrap())
        .collect();
    assert_eq!(gotos, vec!["on_outline"]);
    assert!(validate_workflow_form(&f, &fixture_registry()).is_empty());
}

#[test]
fn existing_agent_must_be_registered() {
    let f = parse_workflow_form(WIKI_WORKFLOW).unwrap();
    assert_eq!(codes(&validate_workflow_form(&f, &StaticRegistry::new())), vec![DiagCode::V8]);
}

#[test]
fn duplicate_registered_workflow_name_is_v1() {
    let f = parse_workflow_form(WORKFLOW_FORM).unwrap();
    let reg = StaticRegistry::new().workflow("parallel_math_solver_workflow");
    assert_eq!(codes(&validate_workflow_form(&f, &reg)), vec![DiagCode::V1]);
}

#[test]
fn every_workflow_mutant_yields_exactly_its_code() {
    for (code, form) in workflow_mutants() {
        // Round-trip through XML so the mutant is exercised as text too.
        let reparsed = parse_workflow_form(&form.to_xml()).unwrap();
        let diags = validate_workflow_form(&reparsed, &fixture_registry());
        assert_eq!(codes(&diags), vec![code], "{diags:?}");
    }
}

#[test]
fn every_agent_mutant_yields_exactly_its_code() {
    for (code, form) in agent_mutants() {
        let reparsed = parse_agent_form(&form.to_xml()).unwrap();
        let diags = validate_agent_form(&reparsed, &fixture_registry());
        assert_eq!(codes(&diags), vec![code], "{diags:?}");
    }
}

#[test]
fn diagnostics_locate_the_event() {
    let (_, form) = workflow_mutants().into_iter().find(|(c, _)| *c == DiagCode::V5).unwrap();
    let diags = validate_workflow_form(&form, &fixture_registry());
    assert_eq!(diags[0].location, "/workflow/events/event[4]/outputs/output[2]/action");
}

#[test]
fn fixtures_reach_a_serialization_fixpoint() {
    for xml in [WORKFLOW_FORM, WIKI_WORKFLOW] {
        let a = parse_workflow_form(xml).unwrap();
        let b = parse_workflow_form(&a.to_xml()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_xml(), b.to_xml());
    }
    for xml in [SINGLE_FORM, MULTI_FORM] {
        let a = parse_agent_form(xml).unwrap();
        let b = parse_agent_form(&a.to_xml()).unwrap();
        assert_eq!(a, b);
    }
}
