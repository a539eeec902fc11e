"""
The two-stage tutoring QA pipeline
==================================

A question goes through two model calls: the first turns it into one
graph query command, the second answers from the executed paths and
nothing else. If the generated command does not parse or names unknown
concepts, a deterministic fallback builds the query from the concepts
mentioned in the question, so a batch never dies on a bad command.
"""

from conceptgraph.graph import Concept, ConceptGraph
from conceptgraph.llm import (
    GarbageCommandOracle,
    GroundedAnswerOracle,
    TemplateCommandOracle,
)
from conceptgraph.pipeline import (
    TutorQaItem,
    build_command_prompt,
    run_items,
    run_task,
)

names = [
    "Probability",
    "Hidden Markov Model",
    "Viterbi Algorithm",
    "POS Tagging",
    "Syntax Trees",
]
concepts = tuple(Concept(id=f"c{i}", name=n) for i, n in enumerate(names))
g = ConceptGraph(concepts)
for s, t in [("c0", "c1"), ("c1", "c2"), ("c2", "c3"), ("c4", "c3")]:
    g = g.add_edge(s, t)

item = TutorQaItem(
    task=1,
    question="Does Probability come before POS Tagging in the study order?",
    answer="Yes",
)

# Stage one: the command prompt shows the grammar and the question.
print("--- command prompt ---")
print(build_command_prompt(item.question, item.task))
print("----------------------")

# The template mock stands in for an instruction-following model: it
# reads the question and emits a well-formed command.
command_oracle = TemplateCommandOracle(names)
answer_oracle = GroundedAnswerOracle()
answer, trace = run_task(item, g, command_oracle, answer_oracle)
print("generated command:", trace.generated_command)
print("final answer:", answer)
print("fallback used:", trace.fallback_used)

# Stage two sees only the executed paths. This is the grounding prompt
# the final answer came from.
print("--- grounding prompt ---")
print(trace.grounding_prompt)
print("------------------------")

# Now the same item with a command model that emits garbage. The
# fallback extracts the two mentioned concepts and runs the same
# reachability query, so the answer is unchanged.
broken = GarbageCommandOracle()
answer, trace = run_task(item, g, broken, answer_oracle)
print("garbage command:", trace.generated_command)
print("fallback answer:", answer, "| fallback used:", trace.fallback_used)
print("query the fallback ran:", trace.parsed_query)

# A small batch across task types; results keep item order.
items = [
    item,
    TutorQaItem(
        task=3,
        question="What path leads from Probability to POS Tagging?",
        answer=["Probability", "Hidden Markov Model", "Viterbi Algorithm", "POS Tagging"],
    ),
    TutorQaItem(
        task=5,
        question="I keep failing at Viterbi Algorithm, what should I review?",
        answer="review the prerequisites",
    ),
]
for it, (ans, tr) in zip(items, run_items(items, g, command_oracle, answer_oracle)):
    print(f"task {it.task}: {ans}")
