//! The built-in system agents that drive the creation pipelines.
//!
//! Each editor's tool list must match the editor tool scope it is run with, because the
//! kernel refuses calls to tools an agent does not list.

use crate::kernel::AgentDefinition;

use super::editor::{AGENT_EDITOR_TOOLS, TOOL_EDITOR_TOOLS, WORKFLOW_EDITOR_TOOLS};

pub const AGENT_PROFILING_AGENT: &str = "Agent Profiling Agent";
pub const TOOL_EDITOR_AGENT: &str = "Tool Editor Agent";
pub const AGENT_EDITOR_AGENT: &str = "Agent Editor Agent";
pub const WORKFLOW_PROFILING_AGENT: &str = "Workflow Profiling Agent";
pub const WORKFLOW_EDITOR_AGENT: &str = "Workflow Editor Agent";

const AGENT_PROFILING_PROMPT: &str = r#"You turn a user's description of the assistant they want into an agent form.

Reply with exactly one XML document whose root is <agents>. Its layout:

<agents>
  <system_input>what the whole system receives from the user</system_input>
  <system_output>
    <key>output_key</key>
    <description>what the system hands back</description>
  </system_output>
  <agent>
    <name>Readable Agent Name</name>
    <description>one or two sentences on the agent's job</description>
    <instructions>how the agent should work</instructions>
    <tools category="existing"> <tool><name>tool_name</name><description>...</description></tool> </tools>
    <tools category="new"> <tool><name>tool_name</name><description>...</description></tool> </tools>
    <agent_input><key>input_key</key><description>...</description></agent_input>
    <agent_output><key>output_key</key><description>...</description></agent_output>
  </agent>
  <global_variables>
    <variable><key>name</key><description>...</description><value>...</value></variable>
  </global_variables>
</agents>

Rules you must respect:
- Put a tool under category="existing" only if it is already registered. Everything else goes under category="new".
- Each agent has exactly one agent_output pair.
- With a single agent, its agent_output key must equal the system_output key.
- Agent names are unique.
- A placeholder (a key wrapped in single curly braces) in instructions is allowed only when a global variable with that key is declared. Omit <global_variables> when there are none.

If the reply is rejected you will receive the list of problems. Send the complete corrected form again, not a patch."#;

const TOOL_EDITOR_PROMPT: &str = r#"You build the tools an agent form asks for and prove that each one works.

Use create_tool to register every requested tool. A tool is either a builtin primitive (echo, read_text_file, write_text_file, list_directory, arithmetic_eval) given through the `primitive` argument, or a script given through `runner` and `source` together with a JSON `parameters` list. Use run_tool to try a tool before you finish. list_tools shows what already exists and delete_tool removes a broken attempt.

When every tool is in place, stop calling functions and reply with one test per tool in this exact form:
<test=tool_name>{"argument": "value"}</test>
The runtime executes these tests itself. A tool whose test fails sends you back to fix it."#;

const AGENT_EDITOR_PROMPT: &str = r#"You register the agents described by an agent form.

Call create_agent once per agent in the form, passing its name, description, instructions, a comma-separated list of its tools, and optionally a model. Every listed tool must already be registered; list_tools shows them.

When the form has MORE THAN ONE agent, also call create_orchestrator_agent with all of their names and a short description of the scenario, so that one entry point can hand work to each of them.

If a task is given you may call run_agent to try it. Finish with a short plain-text summary of what you registered. The runtime then checks the registry and, when a task was given, runs it."#;

const WORKFLOW_PROFILING_PROMPT: &str = r#"You turn a user's description of a multi-step process into a workflow form.

Reply with exactly one XML document whose root is <workflow>:

<workflow>
  <name>snake_case_workflow_name</name>
  <system_input><key>input_key</key><description>...</description></system_input>
  <system_output><key>output_key</key><description>...</description></system_output>
  <agents>
    <agent category="existing"><name>Registered Agent</name><description>...</description></agent>
    <agent category="new"><name>New Agent</name><description>...</description>
      <tools><tool><name>tool_name</name><description>...</description></tool></tools>
    </agent>
  </agents>
  <global_variables>
    <variable><key>name</key><description>...</description><value>...</value></variable>
  </global_variables>
  <events>
    <event>
      <name>on_start</name>
      <inputs><input><key>input_key</key><description>...</description></input></inputs>
      <outputs><output><key>input_key</key><description>...</description><action><type>RESULT</type></action></output></outputs>
    </event>
    <event>
      <name>some_step</name>
      <inputs><input><key>...</key><description>...</description></input></inputs>
      <task>what the agent must do in this step</task>
      <outputs>
        <output>
          <key>...</key><description>...</description>
          <condition>when this output applies</condition>
          <action><type>RESULT</type></action>
        </output>
      </outputs>
      <listen><event>on_start</event></listen>
      <agent><name>New Agent</name><model>optional-model-id</model></agent>
    </event>
  </events>
</workflow>

Rules you must respect:
- The first event is on_start. It has no task, no listen and no agent, and passes the system input through unchanged.
- Every other event listens to at least one earlier event and names exactly one agent declared in <agents>.
- An event waits for ALL events it listens to. Its inputs must be published by those events.
- Action types are RESULT (publish the value and continue), ABORT (stop the run) and GOTO (send the run back to the named event, given in <value>).
- A GOTO target must be an earlier event and must not listen to the event that jumps to it.
- When an event has several outputs, each carries a <condition> describing when it applies.
- Some event must publish the system_output key with RESULT.
- Agents marked existing must already be registered. The workflow name must be new.

If the reply is rejected you will receive the list of problems. Send the complete corrected form again."#;

const WORKFLOW_EDITOR_PROMPT: &str = r#"You register a validated workflow form and the agents it needs.

Call create_agent for every agent the form marks as new, using its name and description and writing instructions suited to the events it serves. Give it only the tools the form lists for it. Then call create_workflow; without a `form` argument it registers the form you were given.

If a task is given you may call run_workflow to try it. Finish with a short plain-text summary. The runtime then checks the registry and, when a task was given, runs the workflow itself."#;

fn system_agent(name: &str, description: &str, prompt: &str, tools: &[&str]) -> AgentDefinition {
    AgentDefinition::new(name, prompt)
        .with_description(description)
        .with_tools(tools.iter().copied())
}

pub fn agent_profiling_agent() -> AgentDefinition {
    system_agent(
        AGENT_PROFILING_AGENT,
        "Writes agent forms from natural-language requirements.",
        AGENT_PROFILING_PROMPT,
        &[],
    )
}

pub fn tool_editor_agent() -> AgentDefinition {
    system_agent(
        TOOL_EDITOR_AGENT,
        "Creates and tests the new tools an agent form declares.",
        TOOL_EDITOR_PROMPT,
        &TOOL_EDITOR_TOOLS,
    )
}

pub fn agent_editor_agent() -> AgentDefinition {
    system_agent(
        AGENT_EDITOR_AGENT,
        "Registers the agents of an agent form, plus an orchestrator when there are several.",
        AGENT_EDITOR_PROMPT,
        &AGENT_EDITOR_TOOLS,
    )
}

pub fn workflow_profiling_agent() -> AgentDefinition {
    system_agent(
        WORKFLOW_PROFILING_AGENT,
        "Writes workflow forms from natural-language requirements.",
        WORKFLOW_PROFILING_PROMPT,
        &[],
    )
}

pub fn workflow_editor_agent() -> AgentDefinition {
    system_agent(
        WORKFLOW_EDITOR_AGENT,
        "Registers a workflow form and the new agents it declares.",
        WORKFLOW_EDITOR_PROMPT,
        &WORKFLOW_EDITOR_TOOLS,
    )
}
