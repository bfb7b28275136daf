"""Synthetic benchmark triplets: random models plus known-good edits.

Each triplet pairs an original sequence with a target grid rendered from a
mutated copy, so recovery quality can be scored against the mutation that
produced it.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ExhaustedAttemptsError, RenderInvalidError
from .gridio import (
    read_sequence_file,
    read_tsdf,
    write_sequence_file,
    write_text_atomic,
    write_tsdf,
)
from .kernel import GridSpec, TSDFGrid, render
from .quant import BIN_MAX, Channel, quantize
from .sequence import (
    Arc,
    BoolOp,
    Circle,
    ConstructionSequence,
    Extent,
    Extrusion,
    Granularity,
    Line,
    Loop,
    SegmentKind,
    Sketch,
    edit_distance,
    segments,
    validate_sequence,
)

EDIT_CLASSES = ("param-jitter", "primitive-substitute", "loop-add-remove", "pair-add-remove")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for one benchmark corpus."""

    corpus_size: int = 50
    classes: tuple[str, ...] = EDIT_CLASSES
    edits_per_triplet: int = 1
    min_pairs: int = 1
    max_pairs: int = 4
    seed: int = 0
    grid: GridSpec = field(default_factory=GridSpec)
    min_voxel_delta: int = 40
    min_band_departure: int = 8
    max_attempts: int = 500

    def __post_init__(self) -> None:
        if self.corpus_size < 1 or self.edits_per_triplet < 1:
            raise ValueError("corpus_size and edits_per_triplet must be positive")
        if not self.classes or set(self.classes) - set(EDIT_CLASSES):
            raise ValueError(f"classes must be a nonempty subset of {EDIT_CLASSES}")
        if not 1 <= self.min_pairs <= self.max_pairs:
            raise ValueError("need 1 <= min_pairs <= max_pairs")


@dataclass(frozen=True)
class Triplet:
    original: ConstructionSequence
    target: TSDFGrid
    truth: ConstructionSequence
    edit_class: str
    truth_edit_distance: int


# -- random models ----------------------------------------------------------


def _rand_bin(rng, lo: int, hi: int) -> int:
    return int(rng.integers(lo, hi + 1))


def _circle_loop(rng) -> Loop:
    center = (_rand_bin(rng, 80, 176), _rand_bin(rng, 80, 176))
    return Loop((Circle(center, _rand_bin(rng, 25, 70)),))


def _chain_loop(rng, arc_prob: float = 0.25) -> Loop:
    """Star-shaped chain of 3-6 lines/arcs around a random center."""
    while True:
        nv = _rand_bin(rng, 3, 6)
        angles = np.sort(rng.uniform(0.0, 2 * np.pi, nv))
        gaps = np.diff(np.concatenate([angles, angles[:1] + 2 * np.pi]))
        if gaps.min() < 0.35:
            continue
        center = rng.uniform(-0.1, 0.1, 2)
        radii = rng.uniform(0.1, 0.28, nv)
        verts = [
            (
                quantize(center[0] + r * np.cos(a), Channel.COORD_2D),
                quantize(center[1] + r * np.sin(a), Channel.COORD_2D),
            )
            for a, r in zip(angles, radii)
        ]
        if any(verts[i] == verts[(i + 1) % nv] for i in range(nv)):
            continue
        prims = []
        for v in verts:
            if rng.random() < arc_prob:
                prims.append(Arc(v, _rand_bin(rng, 25, 80), bool(rng.integers(2))))
            else:
                prims.append(Line(v))
        return Loop(tuple(prims))


def _hole_inside(rng, outer: Circle) -> Loop:
    radius = _rand_bin(rng, 13, max(14, outer.radius - 30))
    room = outer.radius - radius - 8
    dist = rng.uniform(0.0, max(room, 0))
    ang = rng.uniform(0.0, 2 * np.pi)
    cx = int(np.clip(outer.center[0] + round(dist * np.cos(ang)), 0, BIN_MAX))
    cy = int(np.clip(outer.center[1] + round(dist * np.sin(ang)), 0, BIN_MAX))
    return Loop((Circle((cx, cy), radius),))


def _random_pair(rng, first: bool) -> tuple[Sketch, Extrusion]:
    loop = _circle_loop(rng) if rng.random() < 0.45 else _chain_loop(rng)
    loops = [loop]
    outer = loop.primitives[0]
    if isinstance(outer, Circle) and outer.radius >= 55 and rng.random() < 0.3:
        loops.append(_hole_inside(rng, outer))
    if first:
        op = BoolOp.NEW
    else:
        op = BoolOp.JOIN if rng.random() < 0.65 else BoolOp.CUT
    ext = Extrusion(
        orientation=(0, 0, 0),
        origin=(_rand_bin(rng, 104, 152), _rand_bin(rng, 104, 152), _rand_bin(rng, 64, 140)),
        scale=BIN_MAX,
        dist_pos=_rand_bin(rng, 45, 130),
        dist_neg=0,
        bool_op=op,
        extent=Extent.ONE_SIDED,
    )
    return Sketch(tuple(loops)), ext


def random_sequence(rng, min_pairs: int = 1, max_pairs: int = 4) -> ConstructionSequence:
    """A grammar-valid sequence; rendering may still come up empty."""
    count = _rand_bin(rng, min_pairs, max_pairs)
    return ConstructionSequence(tuple(_random_pair(rng, i == 0) for i in range(count)))


def random_renderable(
    rng,
    spec: GridSpec | None = None,
    min_pairs: int = 1,
    max_pairs: int = 4,
    attempts: int = 200,
) -> ConstructionSequence:
    spec = spec or GridSpec()
    for _ in range(attempts):
        seq = random_sequence(rng, min_pairs, max_pairs)
        try:
            render(seq, spec)
        except RenderInvalidError:
            continue
        return seq
    raise ExhaustedAttemptsError(f"no renderable sequence in {attempts} attempts")


# -- mutations --------------------------------------------------------------


def _with_pair(seq, index, pair) -> ConstructionSequence:
    pairs = list(seq.pairs)
    pairs[index] = pair
    return ConstructionSequence(tuple(pairs))


def _with_loops(seq, index, loops) -> ConstructionSequence:
    return _with_pair(seq, index, (Sketch(tuple(loops)), seq.pairs[index][1]))


def _with_prim(seq, pair_i, loop_i, prim_i, prim) -> ConstructionSequence:
    sketch, ext = seq.pairs[pair_i]
    loops = list(sketch.loops)
    prims = list(loops[loop_i].primitives)
    prims[prim_i] = prim
    loops[loop_i] = Loop(tuple(prims))
    return _with_pair(seq, pair_i, (Sketch(tuple(loops)), ext))


def _jitter(rng, value: int, lo: int, hi: int, spread=(20, 48), floor: int = 16):
    """Shifted bin, or None when clamping eats the move."""
    delta = _rand_bin(rng, spread[0], spread[1]) * (1 if rng.random() < 0.5 else -1)
    out = int(np.clip(value + delta, lo, hi))
    return None if abs(out - value) < floor else out


def _param_jitter(seq, rng):
    # jitter only parameters wholly owned by one segment; a line's endpoint
    # is shared with the next primitive in the chain, so moving it edits two
    # curves and ground truth stops being attributable
    eligible = []
    for seg in segments(seq, Granularity.PRIMITIVE):
        if seg.id.kind is SegmentKind.EXTRUSION:
            eligible.append((seg, None))
            continue
        prim = seq.pairs[seg.id.pair][0].loops[seg.id.loop].primitives[seg.id.prim]
        if isinstance(prim, (Circle, Arc)):
            eligible.append((seg, prim))
    if not eligible:
        return None
    seg, prim = eligible[int(rng.integers(len(eligible)))]
    if prim is None:
        sketch, ext = seq.pairs[seg.id.pair]
        dist = _jitter(rng, ext.dist_pos, 20, 200)
        if dist is None:
            return None
        return _with_pair(seq, seg.id.pair, (sketch, dataclasses.replace(ext, dist_pos=dist)))
    if isinstance(prim, Circle):
        if rng.random() < 0.5:
            cx = _jitter(rng, prim.center[0], 30, 225)
            cy = _jitter(rng, prim.center[1], 30, 225)
            if cx is None or cy is None:
                return None
            new = Circle((cx, cy), prim.radius)
        else:
            radius = _jitter(rng, prim.radius, 14, 110)
            if radius is None:
                return None
            new = Circle(prim.center, radius)
    else:
        # the bulge barely moves for small sweep shifts; push hard enough
        # to displace the curve by a couple of voxels
        sweep = _jitter(rng, prim.sweep, 15, 240, spread=(64, 128), floor=40)
        if sweep is None:
            return None
        new = Arc(prim.end, sweep, prim.ccw)
    return _with_prim(seq, seg.id.pair, seg.id.loop, seg.id.prim, new)


def _primitive_substitute(seq, rng):
    spots = [
        (pi, li, ki)
        for pi, (sketch, _) in enumerate(seq.pairs)
        for li, loop in enumerate(sketch.loops)
        for ki, prim in enumerate(loop.primitives)
        if not isinstance(prim, Circle)
    ]
    if not spots:
        return None
    pi, li, ki = spots[int(rng.integers(len(spots)))]
    prim = seq.pairs[pi][0].loops[li].primitives[ki]
    if isinstance(prim, Line):
        new = Arc(prim.end, _rand_bin(rng, 30, 85), bool(rng.integers(2)))
    else:
        new = Line(prim.end)
    return _with_prim(seq, pi, li, ki, new)


def _loop_add_remove(seq, rng):
    choices = []
    for i, (sketch, _) in enumerate(seq.pairs):
        if len(sketch.loops) >= 2:
            choices.append(("remove", i))
        outer = sketch.loops[0].primitives[0]
        if isinstance(outer, Circle) and outer.radius >= 55:
            choices.append(("add", i))
    if not choices:
        return None
    action, i = choices[int(rng.integers(len(choices)))]
    sketch = seq.pairs[i][0]
    if action == "remove":
        return _with_loops(seq, i, sketch.loops[:-1])
    return _with_loops(seq, i, tuple(sketch.loops) + (_hole_inside(rng, sketch.loops[0].primitives[0]),))


def _pair_add_remove(seq, rng):
    can_remove = len(seq.pairs) >= 2
    can_add = len(seq.pairs) <= 5
    if can_remove and (not can_add or rng.random() < 0.5):
        i = 1 + int(rng.integers(len(seq.pairs) - 1))
        return ConstructionSequence(seq.pairs[:i] + seq.pairs[i + 1 :])
    return ConstructionSequence(tuple(seq.pairs) + (_random_pair(rng, first=False),))


_MUTATORS = {
    "param-jitter": _param_jitter,
    "primitive-substitute": _primitive_substitute,
    "loop-add-remove": _loop_add_remove,
    "pair-add-remove": _pair_add_remove,
}


def mutate(seq: ConstructionSequence, edit_class: str, rng, spec: GridSpec | None = None):
    """One edit of the given class, or None when the class cannot apply here.

    The result always validates and renders; candidates that fail either
    check are resampled internally.
    """
    spec = spec or GridSpec()
    for _ in range(24):
        cand = _MUTATORS[edit_class](seq, rng)
        if cand is None or validate_sequence(cand):
            continue
        try:
            render(cand, spec)
        except RenderInvalidError:
            continue
        return cand
    return None


# -- corpus assembly --------------------------------------------------------


def synth(spec: SynthSpec) -> list[Triplet]:
    """Deterministic corpus: triplet index seeds its own generator stream."""
    out: list[Triplet] = []
    for index in range(spec.corpus_size):
        rng = np.random.default_rng([spec.seed, index])
        for _ in range(spec.max_attempts):
            try:
                base = random_renderable(rng, spec.grid, spec.min_pairs, spec.max_pairs)
            except ExhaustedAttemptsError:
                continue
            edit_class = spec.classes[int(rng.integers(len(spec.classes)))]
            truth = base
            for _ in range(spec.edits_per_triplet):
                truth = mutate(truth, edit_class, rng, spec.grid)
                if truth is None:
                    break
            if truth is None:
                continue
            base_grid = render(base, spec.grid)
            target = render(truth, spec.grid)
            delta = int((base_grid.occupancy() ^ target.occupancy()).sum())
            if delta < spec.min_voxel_delta:
                continue
            # a surface-band representation must be able to see the edit:
            # some of the old near-surface shell has to end up far from the
            # new surface, or the change is pure growth into free space
            band = 2 * spec.grid.pitch
            departed = (np.abs(base_grid.values) < band) & ~(np.abs(target.values) < band)
            if int(departed.sum()) < spec.min_band_departure:
                continue
            out.append(Triplet(base, target, truth, edit_class, edit_distance(base, truth)))
            break
        else:
            raise ExhaustedAttemptsError(
                f"triplet {index}: no usable {'/'.join(spec.classes)} edit "
                f"within {spec.max_attempts} attempts"
            )
    return out


def save_corpus(path, triplets: list[Triplet], spec: SynthSpec) -> None:
    path = Path(path)
    lines = [
        f"corpus_size {len(triplets)}",
        f"seed {spec.seed}",
        f"classes {','.join(spec.classes)}",
        f"edits_per_triplet {spec.edits_per_triplet}",
        f"resolution {spec.grid.resolution}",
        f"tau {spec.grid.tau:.9g}",
    ]
    for k, t in enumerate(triplets):
        stem = f"{k:04d}"
        write_sequence_file(path / f"{stem}.orig.seq", t.original)
        write_tsdf(path / f"{stem}.target.tsdf", t.target)
        write_sequence_file(path / f"{stem}.truth.seq", t.truth)
        lines.append(f"triplet {stem} {t.edit_class}")
    write_text_atomic(path / "manifest", "\n".join(lines) + "\n")


def load_corpus(path) -> list[Triplet]:
    path = Path(path)
    out = []
    for line in (path / "manifest").read_text(encoding="utf-8").splitlines():
        if not line.startswith("triplet "):
            continue
        _, stem, edit_class = line.split()
        original = read_sequence_file(path / f"{stem}.orig.seq")
        truth = read_sequence_file(path / f"{stem}.truth.seq")
        target = read_tsdf(path / f"{stem}.target.tsdf")
        out.append(Triplet(original, target, truth, edit_class, edit_distance(original, truth)))
    return out
