"""Layer profiles of a foundation model and contiguous split schemes

A model is an ordered list of layers. A split scheme cuts that list at
strictly increasing boundaries into `k` consecutive segments, each of which
is placed on one node as a unit. The set of all such schemes with at most
`max_segments` segments is what the split revision searches over.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from itertools import combinations
from typing import Iterable, List, Sequence, Tuple

from .utils import InvalidBoundary


@dataclass(frozen=True)
class LayerProfile:
    """Per-request profile of a single layer

    Attributes:
        layer_index: Position of the layer in the model, 0-based
        compute_cost: FLOPs needed per request
        weight_bytes: Size of the layer's weights
        activation_out_bits: Bits handed to the next layer per request
        privacy_critical: Whether the layer sees private data and must stay
            on a trusted node
    """

    layer_index: int
    compute_cost: float
    weight_bytes: float
    activation_out_bits: float
    privacy_critical: bool = False

    def __post_init__(self) -> None:
        for name in ("compute_cost", "weight_bytes", "activation_out_bits"):
            if getattr(self, name) < 0:
                raise ValueError(
                    f"Layer {self.layer_index}: {name} must be >= 0, "
                    f"got {getattr(self, name)!r}."
                )


@dataclass(frozen=True)
class ModelProfile:
    """A foundation model as an ordered layer profile"""

    name: str
    layers: Tuple[LayerProfile, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise ValueError(f"Model {self.name!r} needs at least one layer.")
        for expected, layer in enumerate(self.layers):
            if layer.layer_index != expected:
                raise ValueError(
                    f"Model {self.name!r}: layer indices must be 0..m-1 "
                    f"without gaps, got {layer.layer_index} at "
                    f"position {expected}."
                )

    @classmethod
    def uniform(
        cls,
        name: str,
        num_layers: int,
        compute_cost: float,
        weight_bytes: float,
        activation_out_bits: float,
        privacy_critical: Iterable[int] = (),
    ) -> "ModelProfile":
        """Build a model of identical layers, e.g. the decoder blocks of a
        transformer

        Args:
            privacy_critical: Indices of the layers to flag privacy-critical.
                Negative indices count from the end.
        """
        critical = {
            idx if idx >= 0 else num_layers + idx for idx in privacy_critical
        }
        return cls(
            name,
            tuple(
                LayerProfile(
                    i,
                    compute_cost,
                    weight_bytes,
                    activation_out_bits,
                    i in critical,
                )
                for i in range(num_layers)
            ),
        )

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    @property
    def total_compute(self) -> float:
        return sum(layer.compute_cost for layer in self.layers)

    @property
    def total_weight_bytes(self) -> float:
        return sum(layer.weight_bytes for layer in self.layers)


@dataclass(frozen=True)
class Segment:
    """A contiguous run of layers placed as a unit

    Attributes:
        segment_index: Position `j` of the segment in its scheme
        layer_range: Half-open `(start, stop)` interval of layer indices
        load_compute: Sum of member compute costs
        load_mem: Sum of member weight bytes
        boundary_activation_bits: Activation bits emitted by the last layer,
            i.e. what crosses the boundary to the next segment
        privacy_critical: Whether any member layer is privacy-critical
    """

    segment_index: int
    layer_range: Tuple[int, int]
    load_compute: float
    load_mem: float
    boundary_activation_bits: float
    privacy_critical: bool

    @classmethod
    def aggregate(
        cls,
        segment_index: int,
        layers: Sequence[LayerProfile],
        start: int,
        stop: int,
    ) -> "Segment":
        members = layers[start:stop]
        return cls(
            segment_index=segment_index,
            layer_range=(start, stop),
            load_compute=sum(layer.compute_cost for layer in members),
            load_mem=sum(layer.weight_bytes for layer in members),
            boundary_activation_bits=members[-1].activation_out_bits,
            privacy_critical=any(layer.privacy_critical for layer in members),
        )

    @property
    def num_layers(self) -> int:
        return self.layer_range[1] - self.layer_range[0]


@dataclass(frozen=True)
class SplitScheme:
    """A segmentation of a model's layers into consecutive segments

    Build it with `make_split`, which validates the boundaries.
    """

    profile: ModelProfile = field(repr=False)
    boundaries: Tuple[int, ...]
    segments: Tuple[Segment, ...] = field(repr=False)

    @property
    def k(self) -> int:
        """Number of segments"""
        return len(self.segments)

    @property
    def ranges(self) -> Tuple[Tuple[int, int], ...]:
        return tuple(seg.layer_range for seg in self.segments)

    def segment_of(self, layer_index: int) -> Segment:
        """The segment holding the given layer"""
        for seg in self.segments:
            if seg.layer_range[0] <= layer_index < seg.layer_range[1]:
                return seg
        raise IndexError(
            f"Layer {layer_index} is not part of model {self.profile.name!r}."
        )


def make_split(profile: ModelProfile, boundaries: Iterable[int]) -> SplitScheme:
    """Cut a model at the given boundaries

    Args:
        profile: The model to split
        boundaries: Cut positions. A cut at `b` puts layer `b - 1` and
            layer `b` into different segments. Must be strictly increasing
            and within `[1, m - 1]`.

    Returns:
        The split scheme with `len(boundaries) + 1` segments

    Raises:
        InvalidBoundary: When a cut is out of range, duplicated or not
            increasing
    """
    boundaries = tuple(boundaries)
    m = profile.num_layers
    prev = 0
    for cut in boundaries:
        if not isinstance(cut, int) or isinstance(cut, bool):
            raise InvalidBoundary(f"Cut {cut!r} is not a layer index.")
        if cut < 1 or cut > m - 1:
            raise InvalidBoundary(
                f"Cut {cut} out of range [1, {m - 1}] for a "
                f"{m}-layer model."
            )
        if cut <= prev:
            raise InvalidBoundary(
                f"Cuts must be strictly increasing, got {list(boundaries)}."
            )
        prev = cut

    edges = (0, *boundaries, m)
    segments = tuple(
        Segment.aggregate(j, profile.layers, start, stop)
        for j, (start, stop) in enumerate(zip(edges, edges[1:]))
    )
    return SplitScheme(profile, boundaries, segments)


@lru_cache(maxsize=64)
def _boundary_lists(m: int, max_segments: int) -> Tuple[Tuple[int, ...], ...]:
    """All cut lists with fewer than `max_segments` cuts, fewest cuts first,
    lexicographic within the same count"""
    return tuple(
        cuts
        for ncuts in range(max_segments)
        for cuts in combinations(range(1, m), ncuts)
    )


def enumerate_splits(profile: ModelProfile, max_segments: int) -> List[SplitScheme]:
    """All contiguous segmentations with 1 to `max_segments` segments

    The order is deterministic: fewer segments first, then boundary lists in
    lexicographic order. For `m = 3, max_segments = 3` this gives
    `[], [1], [2], [1, 2]`.

    Raises:
        ValueError: When `max_segments` is not in `[1, m]`
    """
    m = profile.num_layers
    if not 1 <= max_segments <= m:
        raise ValueError(
            f"max_segments must be within [1, {m}], got {max_segments}."
        )
    return [make_split(profile, cuts) for cuts in _boundary_lists(m, max_segments)]


def subdivide(scheme: SplitScheme, segment_index: int, cut: int) -> SplitScheme:
    """Split one segment of a scheme in two, keeping the other boundaries

    Raises:
        InvalidBoundary: When the segment does not exist or the cut is not
            strictly inside it
    """
    if not 0 <= segment_index < scheme.k:
        raise InvalidBoundary(
            f"Segment {segment_index} does not exist, scheme has "
            f"{scheme.k} segment(s)."
        )
    start, stop = scheme.segments[segment_index].layer_range
    if not start < cut < stop:
        raise InvalidBoundary(
            f"Cut {cut} is not interior to segment {segment_index} "
            f"spanning layers [{start}, {stop})."
        )
    return make_split(scheme.profile, sorted((*scheme.boundaries, cut)))
