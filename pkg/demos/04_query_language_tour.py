"""
The graph query language
========================

Tutoring questions are answered by first generating one command in a
four-command query language, then executing it against the concept
graph. The parser is total: any input either yields an AST or a syntax
error with a byte offset and the tokens that would have been accepted.
"""

from conceptgraph.graph import Concept, ConceptGraph
from conceptgraph.query import (
    GRAMMAR_REFERENCE,
    QuerySyntaxError,
    execute,
    parse_query,
    render_query,
)

print("--- grammar reference (as shown to the command model) ---")
print(GRAMMAR_REFERENCE)
print("----------------------------------------------------------")

# The four command forms. Keywords are case-insensitive and concept
# names sit in double quotes with backslash escapes.
for text in (
    'REACHABLE "Probability" -> "POS Tagging"',
    'shortest "Probability" -> "Viterbi Algorithm"',
    'PREREQ   "POS Tagging"   DEPTH 2',
    'neighbors "Hidden Markov Model" out hops 2',
    'REACHABLE "say \\"hi\\"" -> "backslash \\\\"',
):
    ast = parse_query(text)
    print(f"{text!r}\n    -> {ast}\n    canonical: {render_query(ast)}")

# Failed parses report where and what was expected.
for bad in ('WALK "a" -> "b"', 'REACHABLE Probability -> "b"', 'PREREQ "a" DEPTH 0'):
    try:
        parse_query(bad)
    except QuerySyntaxError as exc:
        print(f"{bad!r}: {exc}")

# Execution resolves names against a graph and returns paths plus ids.
concepts = (
    Concept(id="c0", name="Probability"),
    Concept(id="c1", name="Hidden Markov Model"),
    Concept(id="c2", name="Viterbi Algorithm"),
    Concept(id="c3", name="POS Tagging"),
)
g = ConceptGraph(concepts)
for s, t in [("c0", "c1"), ("c1", "c2"), ("c2", "c3")]:
    g = g.add_edge(s, t)

outcome = execute(parse_query('REACHABLE "Probability" -> "POS Tagging"'), g)
print("reachable payload:", outcome.payload)
print("witness paths (names):", outcome.named_paths)

# Reachability of a concept from itself is reported false unless a
# cycle produces an actual witness path.
self_check = execute(parse_query('REACHABLE "Probability" -> "Probability"'), g)
print("self reachability on an acyclic graph:", self_check.payload)

outcome = execute(parse_query('PREREQ "POS Tagging" DEPTH 3'), g)
print("prerequisite chains:")
for path in outcome.named_paths:
    print("   ", " -> ".join(path))

# Unreachable pairs are an empty result, not an error.
outcome = execute(parse_query('SHORTEST "POS Tagging" -> "Probability"'), g)
print("reverse shortest paths:", outcome.payload.paths)
