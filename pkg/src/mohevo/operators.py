"""Prompt operators, response parsing, and offspring sources.

Five search operators drive offspring generation: two crossover-style prompts
that show several parents (explore a different form / build on the common
idea) and three mutation-style prompts over a single parent (modify, retune
parameters, simplify). Responses carry a one-sentence description between
<start>/<end> sentinels and the program in a fenced code block.

Offspring text can come from a chat-completions endpoint or from a seeded
offline mock that emits valid programs from task-specific template families,
including a deliberate fraction of malformed responses to exercise the
failure paths.
"""

from __future__ import annotations

import os
import random
import time
from dataclasses import dataclass
from enum import Enum

import numpy as np
import requests

from .dsl import NodeKind, ParseError, SyntaxTree, parse, pretty_print
from .problems.base import CodeRequirements, TaskSpec


class Operator(str, Enum):
    INIT = "init"
    E1 = "e1"
    E2 = "e2"
    M1 = "m1"
    M2 = "m2"
    M3 = "m3"


PARENT_SLOTS = {
    Operator.INIT: 0,
    Operator.E1: 5,
    Operator.E2: 5,
    Operator.M1: 1,
    Operator.M2: 1,
    Operator.M3: 1,
}

MUTATION_OPERATORS = (Operator.M1, Operator.M2, Operator.M3)


class ArityError(ValueError):
    pass


class ResponseFormatError(ValueError):
    category = "malformed_response"


class MissingDescription(ResponseFormatError):
    category = "missing_description"


class MissingCodeBlock(ResponseFormatError):
    category = "missing_code_block"


class EmptyCode(ResponseFormatError):
    category = "empty_code"


@dataclass(frozen=True)
class GeneratorResponse:
    raw_text: str
    description: str
    code: str


# --- prompt rendering -----------------------------------------------------------

SENTINEL_INSTRUCTION = (
    "First, describe your new algorithm and main steps in one sentence. The "
    'description must start with "<start>" and end with "<end>".'
)

FENCE_INSTRUCTION = (
    "Your code must be given as a single fenced code block:\n```\nfn ...\n```"
)

CLOSING_INSTRUCTION = "Be creative and do not give additional explanation."

GRAMMAR_GUIDE = """The mini language:
    fn name(arg1, arg2) { statements }
    statements: let x = expr;   x = expr;   m[i, j] = expr;
                for i in a..b { ... }   if cond { ... } else { ... }   return expr;
    operators: + - * / % ^   comparisons < <= > >= == !=   logic && || !
    builtins: abs sqrt log exp tanh min max pow floor ceil sum mean maxv minv
              len rows cols zeros copy
Values are float scalars, vectors, and matrices; arithmetic is elementwise with
scalar broadcasting. No strings, no randomness, no user-defined functions."""

_OPERATOR_GUIDANCE = {
    Operator.INIT: "Please help me design a novel algorithm to solve the task above.",
    Operator.E1: ("Please help me create a new algorithm that has a totally "
                  "different form from the given ones."),
    Operator.E2: ("Please identify the common idea behind the provided algorithms. "
                  "Then help me create a new algorithm that builds on the common "
                  "idea but has a different form."),
    Operator.M1: ("Please assist me in creating a new algorithm that has a "
                  "different form but can be a modified version of the algorithm "
                  "provided."),
    Operator.M2: ("Please identify the main algorithm parameters and assist me in "
                  "creating a new algorithm that has a different parameter "
                  "settings of the function provided."),
}


def render_prompt(kind: Operator, task_desc: str, code_req, parents,
                  expected_parents: int | None = None) -> str:
    """Deterministic prompt text for one operator invocation.

    `code_req` may be a CodeRequirements or a plain string used for both the
    full and the inputs/outputs-only clause.
    """
    if isinstance(code_req, str):
        code_req = CodeRequirements(full=code_req, io_only=code_req)
    slots = PARENT_SLOTS[kind] if expected_parents is None else expected_parents
    if len(parents) != slots:
        raise ArityError(f"{kind.value} takes {slots} parent(s), got {len(parents)}")

    if kind is Operator.M3:
        parts = [
            "First, you need to identify the main components in the function below.",
            "Next, analyze whether any of these components can be overfit to the "
            "in-distribution instances.",
            "Then, based on your analysis, simplify the components to enhance the "
            "generalization to potential out-of-distribution instances.",
            "Finally, provide the revised code, keeping the function, inputs, and "
            "outputs unchanged.",
            _code_block(parents[0]),
            code_req.io_only,
            GRAMMAR_GUIDE,
            SENTINEL_INSTRUCTION,
            FENCE_INSTRUCTION,
            CLOSING_INSTRUCTION,
        ]
        return "\n\n".join(parts)

    parts = [task_desc]
    if kind in (Operator.E1, Operator.E2):
        parts.append(f"I have {len(parents)} existing algorithms with their codes "
                     "as follows:")
        for parent in parents:
            parts.append(_parent_block(parent))
    elif kind in (Operator.M1, Operator.M2):
        parts.append("I have one algorithm with its code as follows:")
        parts.append(_parent_block(parents[0]))
    parts.append(_OPERATOR_GUIDANCE[kind])
    parts.append(SENTINEL_INSTRUCTION)
    parts.append(f"Next, {code_req.full}")
    parts.append(GRAMMAR_GUIDE)
    parts.append(FENCE_INSTRUCTION)
    parts.append(CLOSING_INSTRUCTION)
    return "\n\n".join(parts)


def _parent_block(parent) -> str:
    return (f"<Algorithm description>: {parent.description}\n"
            f"<Code>:\n```\n{parent.source}\n```")


def _code_block(parent) -> str:
    return f"<Code>:\n```\n{parent.source}\n```"


# --- response parsing --------------------------------------------------------------

def parse_response(text: str) -> GeneratorResponse:
    """Extract (description, code) from a model response.

    The description is the text between the first "<start>" and the following
    "<end>"; the code is the body of the first fenced block. Both tolerate
    surrounding prose.
    """
    start = text.find("<start>")
    if start == -1:
        raise MissingDescription("no <start> sentinel in response")
    end = text.find("<end>", start + len("<start>"))
    if end == -1:
        raise MissingDescription("no <end> sentinel in response")
    description = text[start + len("<start>"):end].strip()
    if not description:
        raise MissingDescription("empty description between sentinels")

    fence_open = text.find("```")
    if fence_open == -1:
        raise MissingCodeBlock("no fenced code block in response")
    body_start = text.find("\n", fence_open)
    fence_close = text.find("```", fence_open + 3)
    if body_start == -1 or fence_close == -1 or body_start > fence_close:
        raise MissingCodeBlock("unterminated fenced code block")
    code = text[body_start + 1:fence_close].strip()
    if not code:
        raise EmptyCode("fenced code block is empty")
    return GeneratorResponse(raw_text=text, description=description, code=code)


# --- endpoint client ------------------------------------------------------------------

class GenerationError(Exception):
    pass


class TransportError(GenerationError):
    pass


class AuthError(GenerationError):
    pass


class RateLimited(GenerationError):
    pass


class MalformedResponse(GenerationError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    model_name: str
    api_key_env_name: str = "MOHEVO_API_KEY"
    temperature: float = 1.0
    timeout: float = 60.0
    max_retries: int = 3
    backoff_base: float = 0.5

    def __post_init__(self):
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


class ChatClient:
    """Minimal chat-completions client with exponential backoff on transport
    failures, 5xx, and rate limiting."""

    def __init__(self, cfg: EndpointConfig):
        self.cfg = cfg
        self.last_retry_count = 0

    def generate(self, prompt: str) -> str:
        cfg = self.cfg
        key = os.environ.get(cfg.api_key_env_name)
        if not key:
            raise AuthError(f"no API key in ${cfg.api_key_env_name}")
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        body = {
            "model": cfg.model_name,
            "temperature": cfg.temperature,
            "messages": [{"role": "user", "content": prompt}],
        }
        headers = {"Authorization": f"Bearer {key}"}
        delay = cfg.backoff_base
        self.last_retry_count = 0
        failure: GenerationError | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt > 0:
                time.sleep(delay)
                delay *= 2
                self.last_retry_count += 1
            try:
                resp = requests.post(url, json=body, headers=headers, timeout=cfg.timeout)
            except requests.RequestException as exc:
                failure = TransportError(str(exc))
                continue
            if resp.status_code in (401, 403):
                raise AuthError(f"endpoint rejected credentials ({resp.status_code})")
            if resp.status_code == 429:
                failure = RateLimited("rate limited by endpoint")
                continue
            if resp.status_code >= 500:
                failure = TransportError(f"server error {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise TransportError(f"unexpected status {resp.status_code}")
            try:
                payload = resp.json()
                content = payload["choices"][0]["message"]["content"]
            except (ValueError, LookupError, TypeError) as exc:
                raise MalformedResponse(f"cannot read response body: {exc}") from exc
            if not isinstance(content, str):
                raise MalformedResponse("message content is not text")
            return content
        assert failure is not None
        raise failure


def llm_generate(cfg: EndpointConfig, prompt: str) -> str:
    return ChatClient(cfg).generate(prompt)


# --- offline mock generator -----------------------------------------------------------

EXPR_KINDS = frozenset({
    NodeKind.BINARY, NodeKind.UNARY, NodeKind.CALL,
    NodeKind.INDEX, NodeKind.IDENT, NodeKind.NUM_LIT,
})

DEFAULT_MALFORMED_RATE = 0.10


def _format_number(value: float) -> str:
    text = f"{value:.6g}"
    return text if "-" not in text else "0"  # literals are non-negative tokens


class MockGenerator:
    """Deterministic stand-in for the language model.

    Emits responses in the operator protocol format whose code is drawn from a
    family of valid programs for the active task. Mutation operators transform
    the parent's tree (constant jitter, subtree replacement, deletion); the
    exploration operators draw fresh templates and may graft parent
    sub-expressions. A fixed fraction of emissions is deliberately malformed.
    """

    def __init__(self, task: TaskSpec, malformed_rate: float = DEFAULT_MALFORMED_RATE):
        if task.name not in ("bpp", "tsp"):
            raise ValueError(f"no mock templates for task {task.name!r}")
        self.task = task
        self.malformed_rate = malformed_rate

    def generate(self, rng: np.random.Generator, kind: Operator, parents) -> str:
        if rng.random() < self.malformed_rate:
            return self._malformed(rng)
        if kind in MUTATION_OPERATORS and parents:
            description, code = self._mutate(rng, kind, parents[0])
        else:
            description, code = self._template(rng, parents if kind in (Operator.E1, Operator.E2) else ())
        lead = ""
        if rng.random() < 0.3:
            lead = "Here is a new algorithm for the task.\n"
        return f"{lead}<start>{description}<end>\n```\n{code}\n```\n"

    # -- template families ------------------------------------------------------

    def _template(self, rng: np.random.Generator, parents) -> tuple[str, str]:
        if self.task.name == "bpp":
            description, code = self._bpp_template(rng)
        else:
            description, code = self._tsp_template(rng)
        if parents and rng.random() < 0.4:
            grafted = self._graft(rng, code, parents)
            if grafted is not None:
                return description + " (borrowing a term from a parent)", grafted
        return description, code

    def _bpp_template(self, rng: np.random.Generator) -> tuple[str, str]:
        roll = int(rng.integers(0, 8))
        if roll == 0:
            return ("Puts each item into the tightest feasible bin.",
                    "fn score(item, bins) {\n    return item - bins;\n}")
        if roll == 1:
            return ("Puts each item into the emptiest feasible bin.",
                    "fn score(item, bins) {\n    return bins;\n}")
        if roll == 2:
            return ("Scores all bins equally, so the first feasible bin wins.",
                    "fn score(item, bins) {\n    return bins * 0;\n}")
        if roll == 3:
            target = int(rng.choice([0, 2, 5, 10, 20, 40]))
            return (f"Prefers bins whose leftover space lands near {target}.",
                    "fn score(item, bins) {\n"
                    f"    return 0 - abs(bins - item - {target});\n}}")
        if roll == 4:
            c = float(rng.choice([0.5, 1, 2]))
            return (f"Rewards tight fits through a reciprocal with offset {c}.",
                    "fn score(item, bins) {\n"
                    f"    return 1 / (bins - item + {_format_number(c)});\n}}")
        if roll == 5:
            k = float(rng.choice([0.5, 1.5, 2.0, 3.0]))
            return (f"Weighted tight-fit preference with slope {k}.",
                    "fn score(item, bins) {\n"
                    f"    return 0 - (bins - item) * {_format_number(k)};\n}}")
        if roll == 6:
            target = int(rng.choice([0, 4, 8, 16]))
            w = float(rng.choice([0.25, 0.5, 1.0]))
            return (f"Loops over bins scoring leftover distance to {target}.",
                    "fn score(item, bins) {\n"
                    "    let n = len(bins);\n"
                    "    let s = zeros(n);\n"
                    "    for i in 0..n {\n"
                    f"        s[i] = 0 - abs(bins[i] - item - {target}) * {_format_number(w)};\n"
                    "    }\n"
                    "    return s;\n}")
        c = float(rng.choice([1, 2, 4]))
        return (f"Balances fullness and tightness with weight {c}.",
                "fn score(item, bins) {\n"
                f"    return 0 - (bins - item) - bins / {_format_number(c)};\n}}")

    def _tsp_template(self, rng: np.random.Generator) -> tuple[str, str]:
        roll = int(rng.integers(0, 5))
        if roll == 0:
            return ("Keeps the distance matrix unchanged.",
                    "fn update_edge_distance(edge_distance, local_opt_tour, edge_n_used) {\n"
                    "    return edge_distance;\n}")
        if roll == 1:
            w = float(rng.choice([0.02, 0.05, 0.1, 0.2]))
            return (f"Inflates every edge by usage with weight {w}.",
                    "fn update_edge_distance(edge_distance, local_opt_tour, edge_n_used) {\n"
                    f"    return edge_distance * (1 + {_format_number(w)} * edge_n_used);\n}}")
        if roll == 2:
            w = float(rng.choice([0.05, 0.1, 0.3]))
            return (f"Adds a usage penalty of weight {w} to all edges.",
                    "fn update_edge_distance(edge_distance, local_opt_tour, edge_n_used) {\n"
                    f"    return edge_distance + {_format_number(w)} * edge_n_used;\n}}")
        if roll == 3:
            c = float(rng.choice([1.05, 1.1, 1.5]))
            return (f"Uniformly rescales the matrix by {c}.",
                    "fn update_edge_distance(edge_distance, local_opt_tour, edge_n_used) {\n"
                    f"    return edge_distance * {_format_number(c)};\n}}")
        w = float(rng.choice([0.05, 0.1, 0.2]))
        return (f"Penalizes only the edges of the current tour by factor {w}.",
                "fn update_edge_distance(edge_distance, local_opt_tour, edge_n_used) {\n"
                "    let n = len(local_opt_tour);\n"
                "    let updated = copy(edge_distance);\n"
                "    for k in 0..n {\n"
                "        let a = local_opt_tour[k];\n"
                "        let b = local_opt_tour[(k + 1) % n];\n"
                f"        updated[a, b] = edge_distance[a, b] * (1 + {_format_number(w)} * edge_n_used[a, b]);\n"
                "        updated[b, a] = updated[a, b];\n"
                "    }\n"
                "    return updated;\n}")

    # -- parent-tree transformations -----------------------------------------------

    def _mutate(self, rng: np.random.Generator, kind: Operator, parent) -> tuple[str, str]:
        tree = parent.tree
        if kind is Operator.M2:
            mutated = _jitter_literals(tree, rng)
            return "Retunes the constants of the parent algorithm.", pretty_print(mutated)
        if kind is Operator.M1:
            replacement = self._random_scalar_expr(rng)
            mutated = _replace_random_expr(tree, rng, replacement)
            return "A modified version of the parent with one term rewritten.", pretty_print(mutated)
        mutated = _simplify(tree, rng)
        return "A simplified version of the parent algorithm.", pretty_print(mutated)

    def _random_scalar_expr(self, rng: np.random.Generator) -> SyntaxTree:
        scalarish = [name for name, shape in self.task.signature.params
                     if shape != "matrix"]
        name = str(rng.choice(scalarish if scalarish else list(self.task.signature.param_names)))
        base = SyntaxTree(NodeKind.IDENT, name)
        constant = SyntaxTree(NodeKind.NUM_LIT, _format_number(float(rng.choice([0.5, 1, 2, 3]))))
        op = str(rng.choice(["+", "-", "*"]))
        return SyntaxTree(NodeKind.BINARY, op, (base, constant))

    def _graft(self, rng: np.random.Generator, code: str, parents) -> str | None:
        parent = parents[int(rng.integers(0, len(parents)))]
        param_names = set(self.task.signature.param_names)
        donors = [node for node in parent.tree.walk()
                  if node.kind in (NodeKind.BINARY, NodeKind.CALL)
                  and _identifiers(node) <= param_names]
        if not donors:
            return None
        donor = donors[int(rng.integers(0, len(donors)))]
        try:
            tree = parse(code)
        except ParseError:
            return None
        return pretty_print(_replace_random_expr(tree, rng, donor))

    # -- malformed emissions ----------------------------------------------------------

    def _malformed(self, rng: np.random.Generator) -> str:
        style = int(rng.integers(0, 5))
        _, code = self._template(rng, ())
        if style == 0:
            return f"A new scoring approach.\n```\n{code}\n```\n"          # no sentinels
        if style == 1:
            return "<start>An idea without any implementation.<end>\nSorry."  # no fence
        if style == 2:
            return "<start>An idea with an empty implementation.<end>\n```\n\n```\n"
        if style == 3:
            broken = code.replace(";", "", 1)
            return f"<start>Almost valid but will not parse.<end>\n```\n{broken}\n```\n"
        renamed = code.replace("(item", "(thing", 1).replace("(edge_distance", "(matrix", 1)
        return f"<start>Valid code for the wrong interface.<end>\n```\n{renamed}\n```\n"


def _identifiers(node: SyntaxTree) -> set[str]:
    return {n.lexeme for n in node.walk()
            if n.kind in (NodeKind.IDENT, NodeKind.INDEX, NodeKind.INDEX_ASSIGN)}


def _jitter_literals(tree: SyntaxTree, rng: np.random.Generator) -> SyntaxTree:
    factor = float(rng.choice([0.5, 0.8, 1.25, 2.0]))

    def rebuild(node: SyntaxTree) -> SyntaxTree:
        if node.kind is NodeKind.NUM_LIT:
            value = float(node.lexeme) * factor
            return SyntaxTree(NodeKind.NUM_LIT, _format_number(value))
        if not node.children:
            return node
        return SyntaxTree(node.kind, node.lexeme, tuple(rebuild(c) for c in node.children))

    return rebuild(tree)


def _expr_paths(node: SyntaxTree, path=()) -> list[tuple]:
    """Paths to replaceable expression nodes: value expressions of statements
    and anything nested inside them, skipping loop bounds, conditions, and
    index positions."""
    paths: list[tuple] = []

    def collect_within(expr: SyntaxTree, expr_path):
        paths.append(expr_path)
        if expr.kind is NodeKind.INDEX:
            return
        for idx, child in enumerate(expr.children):
            if child.kind in EXPR_KINDS:
                collect_within(child, expr_path + (idx,))

    def visit(stmt: SyntaxTree, stmt_path):
        if stmt.kind in (NodeKind.RETURN, NodeKind.LET, NodeKind.ASSIGN):
            collect_within(stmt.children[0], stmt_path + (0,))
        elif stmt.kind is NodeKind.INDEX_ASSIGN:
            last = len(stmt.children) - 1
            collect_within(stmt.children[last], stmt_path + (last,))
        elif stmt.kind is NodeKind.FOR:
            for idx in range(2, len(stmt.children)):
                visit(stmt.children[idx], stmt_path + (idx,))
        elif stmt.kind is NodeKind.IF:
            for idx in range(1, len(stmt.children)):
                visit(stmt.children[idx], stmt_path + (idx,))

    for idx, child in enumerate(node.children):
        if child.kind is not NodeKind.PARAM:
            visit(child, (idx,))
    return paths


def _rebuild_at(node: SyntaxTree, path: tuple, replacement: SyntaxTree) -> SyntaxTree:
    if not path:
        return replacement
    idx = path[0]
    children = list(node.children)
    children[idx] = _rebuild_at(children[idx], path[1:], replacement)
    return SyntaxTree(node.kind, node.lexeme, tuple(children))


def _replace_random_expr(tree: SyntaxTree, rng: np.random.Generator,
                         replacement: SyntaxTree) -> SyntaxTree:
    paths = _expr_paths(tree)
    if not paths:
        return tree
    path = paths[int(rng.integers(0, len(paths)))]
    return _rebuild_at(tree, path, replacement)


def _simplify(tree: SyntaxTree, rng: np.random.Generator) -> SyntaxTree:
    """Drop one non-return statement, or collapse a binary expression to its
    first operand when nothing is removable."""
    body_start = sum(1 for c in tree.children if c.kind is NodeKind.PARAM)
    removable = [idx for idx in range(body_start, len(tree.children))
                 if tree.children[idx].kind is not NodeKind.RETURN]
    if removable and rng.random() < 0.7:
        drop = removable[int(rng.integers(0, len(removable)))]
        children = tuple(c for i, c in enumerate(tree.children) if i != drop)
        return SyntaxTree(tree.kind, tree.lexeme, children)
    paths = _expr_paths(tree)
    for k in rng.permutation(len(paths)):
        path = paths[int(k)]
        node = tree
        for idx in path:
            node = node.children[idx]
        if node.kind is NodeKind.BINARY:
            return _rebuild_at(tree, path, node.children[0])
    return tree


# --- offspring sources ------------------------------------------------------------------

class MockSource:
    """Offline offspring source driven entirely by per-slot rng streams."""

    def __init__(self, task: TaskSpec, malformed_rate: float = DEFAULT_MALFORMED_RATE):
        self.generator = MockGenerator(task, malformed_rate)

    def generate(self, kind: Operator, parents, rng: np.random.Generator) -> str:
        return self.generator.generate(rng, kind, parents)


class EndpointSource:
    """Offspring source that renders the operator prompt and queries a chat
    endpoint."""

    def __init__(self, cfg: EndpointConfig, task: TaskSpec):
        self.client = ChatClient(cfg)
        self.task = task

    def generate(self, kind: Operator, parents, rng: np.random.Generator) -> str:
        expected = PARENT_SLOTS[kind]
        if kind in (Operator.E1, Operator.E2):
            expected = len(parents)
        prompt = render_prompt(kind, self.task.description, self.task.requirements,
                               parents, expected_parents=expected)
        return self.client.generate(prompt)
