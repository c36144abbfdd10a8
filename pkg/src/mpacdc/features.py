"""Feature-string grammar and the batched, chunked feature pipeline.

Grammar (whitespace is ignored)::

    features := term ("+" term)*
    term     := "nu=" INT
              | "3center-nu=0"
              | "pair-nu=(" INT "," INT ")"
              | "edge-nu=(" INT "," INT "," INT ")"
              | mp
    mp       := "[" node "<-" targets "]"
    targets  := node | "(" node ("," node)+ ")"
    node     := INT | mp

``[nu<-nu1]`` contracts decorated pairs over the neighbor index;
``[nu<-(a,b)]`` carries two decorated neighbors and is evaluated through
``[nu<-a] x [0<-b]``; nested brackets iterate the construction.
"""

from __future__ import annotations

import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .acdc import PCAContraction, acdc, cg_combine
from .blocks import EquivariantBlock, Labels, TensorMap, concatenate_samples
from .density import build_batch, unit_tensormap
from .errors import ConfigurationError, ContractError
from .message_passing import (
    Context,
    _sigma_filter,
    decorated_pair_features,
    mp_edge_features,
    three_center_features,
)
from .so3 import build_cg_cache
from .structures import species_table


@dataclass(frozen=True)
class Acdc:
    nu: int

    def __str__(self):
        return f"nu={self.nu}" if self.nu else "0"


@dataclass(frozen=True)
class MessagePassing:
    center: object
    neighbors: tuple

    def __str__(self):
        c = self.center.nu if isinstance(self.center, Acdc) else str(self.center)
        parts = [str(n.nu) if isinstance(n, Acdc) else str(n) for n in self.neighbors]
        nb = parts[0] if len(parts) == 1 else "(" + ",".join(parts) + ")"
        return f"[{c}<-{nb}]"


@dataclass(frozen=True)
class DecoratedPair:
    nu: int
    nu1: int

    def __str__(self):
        return f"pair-nu=({self.nu},{self.nu1})"


@dataclass(frozen=True)
class Edge:
    nu: int
    nu1: int
    nu2: int

    def __str__(self):
        return f"edge-nu=({self.nu},{self.nu1},{self.nu2})"


@dataclass(frozen=True)
class ThreeCenter:
    def __str__(self):
        return "3center-nu=0"


_TOKEN = re.compile(r"\s*(<-|3center-nu=0|pair-nu=|edge-nu=|nu=|\d+|[\[\]\(\),+])")


def _tokenize(text):
    pos = 0
    tokens = []
    text = text.strip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if not m:
            raise ConfigurationError(f"cannot parse feature string {text!r} at position {pos}")
        tokens.append(m.group(1))
        pos = m.end()
        while pos < len(text) and text[pos].isspace():
            pos += 1
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.k = 0

    def peek(self):
        return self.tokens[self.k] if self.k < len(self.tokens) else None

    def take(self, expected=None):
        tok = self.peek()
        if tok is None or (expected is not None and tok != expected):
            raise ConfigurationError(f"feature string {self.text!r}: expected {expected or 'token'}, got {tok!r}")
        self.k += 1
        return tok

    def integer(self):
        tok = self.take()
        if not tok.isdigit():
            raise ConfigurationError(f"feature string {self.text!r}: expected an integer, got {tok!r}")
        return int(tok)

    def features(self):
        terms = [self.term()]
        while self.peek() == "+":
            self.take("+")
            terms.append(self.term())
        if self.peek() is not None:
            raise ConfigurationError(f"feature string {self.text!r}: trailing input {self.peek()!r}")
        return terms

    def term(self):
        tok = self.peek()
        if tok == "nu=":
            self.take()
            return Acdc(self.integer())
        if tok == "3center-nu=0":
            self.take()
            return ThreeCenter()
        if tok == "pair-nu=":
            self.take()
            self.take("(")
            a = self.integer()
            self.take(",")
            b = self.integer()
            self.take(")")
            return DecoratedPair(a, b)
        if tok == "edge-nu=":
            self.take()
            self.take("(")
            a = self.integer()
            self.take(",")
            b = self.integer()
            self.take(",")
            c = self.integer()
            self.take(")")
            return Edge(a, b, c)
        if tok == "[":
            return self.mp()
        raise ConfigurationError(f"feature string {self.text!r}: unexpected token {tok!r}")

    def node(self):
        if self.peek() == "[":
            return self.mp()
        return Acdc(self.integer())

    def mp(self):
        self.take("[")
        center = self.node()
        self.take("<-")
        if self.peek() == "(":
            self.take("(")
            targets = [self.node()]
            while self.peek() == ",":
                self.take(",")
                targets.append(self.node())
            self.take(")")
            if len(targets) < 2:
                raise ConfigurationError(f"feature string {self.text!r}: a neighbor tuple needs two entries")
        else:
            targets = [self.node()]
        self.take("]")
        return MessagePassing(center, tuple(targets))


def parse_feature_string(text):
    """Parse a feature string into a list of term nodes."""
    if not isinstance(text, str) or not text.strip():
        raise ConfigurationError("feature string must be a non-empty string")
    return _Parser(text).features()


def body_order(node):
    """Number of neighbor densities entering a center-sample feature (its nu)."""
    if isinstance(node, Acdc):
        return node.nu
    if isinstance(node, MessagePassing):
        # every decorated neighbor contributes its pair term plus its own decoration
        return body_order(node.center) + sum(1 + body_order(n) for n in node.neighbors)
    raise ConfigurationError(f"{node} has no single-center body order")


# ---------------------------------------------------------------------------
# evaluation


def _all_atoms(ctx):
    return np.ones(ctx.batch.n_atoms, dtype=bool)


def _eval_center(ctx, node, mask, final, memo):
    key = (str(node), final, mask.tobytes() if mask is not None else None)
    if key in memo:
        return memo[key]
    spec = ctx.spec
    if isinstance(node, Acdc):
        samples_mask = mask
        if node.nu == 0:
            out = unit_tensormap(ctx.batch.center_samples().select(samples_mask))
        elif final:
            out = acdc(ctx.nu1(), node.nu, ctx.cache, lambda_max=spec.lambda_cap,
                       lambda_keep=spec.final_lambdas, contraction=ctx.contraction)
            out = out.select_samples(samples_mask)
        else:
            out = ctx.acdc(node.nu).select_samples(samples_mask)
        out.tag = str(node)
    elif isinstance(node, MessagePassing):
        out = _eval_center(ctx, node.center, mask, False, memo)
        for k, nb in enumerate(node.neighbors):
            nb_all = _eval_center(ctx, nb, _all_atoms(ctx), False, memo)
            msg = ctx.message(nb_all, mask)
            last = final and k == len(node.neighbors) - 1
            out = cg_combine(
                out,
                msg,
                ctx.cache,
                lambda_max=spec.lambda_cap,
                lambda_keep=spec.final_lambdas if last else None,
                tag=str(node),
            )
            if not last and ctx.contraction is not None:
                out = ctx.contraction.apply_or_fit(f"{node}#{k}", out)
        out.tag = str(node)
        for blk in out:
            blk.tag = str(node)
    else:
        raise ConfigurationError(f"{node} is not a center feature")
    memo[key] = out
    return out


def evaluate(ctx, node, final=True):
    """Evaluate one term on a :class:`Context`, honoring the spec's center and parity filters."""
    if isinstance(node, DecoratedPair):
        return decorated_pair_features(ctx, node.nu, node.nu1, final=final)
    if isinstance(node, Edge):
        return mp_edge_features(ctx, node.nu, node.nu1, node.nu2, final=final)
    if isinstance(node, ThreeCenter):
        return three_center_features(ctx)
    out = _eval_center(ctx, node, ctx.center_mask(), final, {})
    return _sigma_filter(out, ctx.spec) if final else out


def merge_terms(maps, tag):
    """Concatenate the property axes of several maps on identical samples."""
    if len(maps) == 1:
        return maps[0]
    keys = sorted({k for m in maps for k in m.blocks}, key=lambda k: (k[1], -k[0]))
    out = TensorMap(tag)
    for key in keys:
        present = [(t, m.blocks[key]) for t, m in enumerate(maps) if key in m.blocks]
        samples = present[0][1].samples
        for _, blk in present:
            if blk.samples != samples:
                raise ContractError("cannot merge feature terms defined on different samples")
        vals = np.concatenate([blk.values for _, blk in present], axis=2)
        rows = np.concatenate(
            [np.stack([np.full(blk.values.shape[2], t), np.arange(blk.values.shape[2])], axis=1) for t, blk in present]
        )
        out.blocks[key] = EquivariantBlock(key[0], key[1], vals, samples, Labels(("term", "index"), rows), tag)
    return out


def resolve_spec(spec, structures):
    """Fill in the species table from the data when the spec leaves it open."""
    if spec.species is None:
        spec = spec.with_(species=tuple(species_table(structures)))
    return spec


def _chunks(n, size):
    return [(start, min(n, start + size)) for start in range(0, n, size)]


def compute_features(structures, spec, threads=1, chunk_size=32, cache=None, contraction=None):
    """Features named by ``spec.feature_string`` for a list of structures.

    Structures are processed in fixed-size chunks, so results are bitwise
    independent of ``threads``.  When ``spec.pca_dim`` is set (or a
    ``contraction`` is passed) the whole set is one chunk, because the
    contraction maps are fitted on the data.
    """
    structures = list(structures)
    spec = resolve_spec(spec, structures)
    nodes = parse_feature_string(spec.feature_string)
    if cache is None:
        cache = build_cg_cache(min(16, max(spec.lambda_cap, spec.l_max)))
    if spec.pca_dim is not None and contraction is None:
        contraction = PCAContraction(spec.pca_dim)
    if contraction is not None:
        chunk_size = max(1, len(structures))

    def run(bounds):
        start, stop = bounds
        batch = build_batch(structures[start:stop], spec.basis.r_cut, spec.species, structure_offset=start)
        ctx = Context(batch, spec, cache, contraction)
        maps = [evaluate(ctx, node) for node in nodes]
        return merge_terms(maps, spec.feature_string)

    bounds = _chunks(len(structures), chunk_size)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    out = concatenate_samples(parts)
    out.tag = spec.feature_string
    for blk in out:
        blk.tag = spec.feature_string
    return out
