"""
Finite-difference checks for every differentiable component, at toy sizes.
"""

import logging
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from nmtprobe.constants import GRADCHECK_TOLERANCE
from nmtprobe.numerics.gradcheck import ForwardFn, GradCheckReport, grad_check
from nmtprobe.numerics.params import Parameter, ParameterStore
from nmtprobe.numerics.tensor import Array, Tensor, cross_entropy
from nmtprobe.probe import ProbeConfig, ProbeModel
from nmtprobe.seq2seq.attention import attention, init_attention
from nmtprobe.seq2seq.lstm import init_lstm_cell, lstm_cell_step
from nmtprobe.seq2seq.model import NmtConfig, NmtModel, encode_batch, sequence_loss

logger = logging.getLogger(__name__)

# builds a loss closure and the parameters it depends on
Component = Callable[[np.random.Generator], tuple[ForwardFn, list[Parameter]]]

SIZE = 3
VOCAB = 7


def _projection(rng: np.random.Generator, shape: Sequence[int]) -> Array:
    return rng.normal(size=tuple(shape))


def lstm_cell_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    store = ParameterStore()
    cell = init_lstm_cell(store, "cell", rng, SIZE, SIZE)
    x, h, c = (rng.normal(size=(2, SIZE)) for _ in range(3))
    weights = _projection(rng, (2, SIZE))

    def forward() -> Tensor:
        h_next, c_next = lstm_cell_step(Tensor(x), Tensor(h), Tensor(c), cell)
        return (h_next * Tensor(weights) + c_next).sum()

    return forward, store.parameters()


def _toy_model(rng: np.random.Generator, layers: int) -> NmtModel:
    config = NmtConfig(
        src_vocab_size=VOCAB, tgt_vocab_size=VOCAB, d=SIZE, layers=layers
    )
    return NmtModel(config, rng)


def bilstm_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    model = _toy_model(rng, layers=1)
    batch = [[4, 5, 6], [6, 4]]
    weights = _projection(rng, (2, 3, 2 * SIZE))

    def forward() -> Tensor:
        encoded = encode_batch(model, batch)
        mask = Tensor(encoded.mask.reshape(2, 3, 1))
        return (encoded.memory * Tensor(weights) * mask).sum()

    params = [
        p
        for p in model.parameters()
        if p.name.startswith("enc.") or p.name == "src_embed"
    ]

    return forward, params


def attention_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    store = ParameterStore()
    params = init_attention(store, "att", rng, SIZE, 2 * SIZE, SIZE)
    store.add("query", rng.normal(size=(2, SIZE)))
    store.add("memory", rng.normal(size=(2, 4, 2 * SIZE)))
    mask = np.array([[1.0, 1.0, 1.0, 0.0], [1.0, 1.0, 1.0, 1.0]])
    weights = _projection(rng, (2, 2 * SIZE))

    def forward() -> Tensor:
        context, _ = attention(store["query"], store["memory"], params, mask)
        return (context * Tensor(weights)).sum()

    return forward, store.parameters()


def decoder_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    model = _toy_model(rng, layers=2)
    pairs = [([4, 5, 6], [5, 4]), ([6, 4], [4, 6, 6])]

    def forward() -> Tensor:
        loss, _ = sequence_loss(model, pairs)
        return loss

    return forward, model.parameters()


def _probe_case(
    rng: np.random.Generator,
    config: ProbeConfig,
) -> tuple[ForwardFn, list[Parameter]]:
    model = ProbeModel(config, 4 * SIZE)
    features = rng.normal(size=(5, 4 * SIZE))
    gold = rng.integers(0, len(config.label_scheme), size=5)

    def forward() -> Tensor:
        return cross_entropy(model.logits(Tensor(features)), gold)

    return forward, model.parameters()


def linear_probe_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    seed = int(rng.integers(1 << 31))
    return _probe_case(rng, ProbeConfig(kind="linear", scheme="three_way", seed=seed))


def mlp_case(rng: np.random.Generator) -> tuple[ForwardFn, list[Parameter]]:
    seed = int(rng.integers(1 << 31))
    config = ProbeConfig(kind="mlp", hidden_size=5, depth=2, seed=seed)
    return _probe_case(rng, config)


COMPONENTS: dict[str, Component] = {
    "lstm_cell": lstm_cell_case,
    "bilstm_layer": bilstm_case,
    "attention": attention_case,
    "decoder_step": decoder_case,
    "linear_probe": linear_probe_case,
    "mlp": mlp_case,
}


def run_suite(
    seeds: Iterable[int] = range(10),
    components: Optional[Sequence[str]] = None,
    samples: Optional[int] = 24,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> dict[str, GradCheckReport]:
    """
    Gradient-checks each component once per seed.

    Args:
        seeds: One check per seed and component.
        components: Names from COMPONENTS; None runs them all.
        samples: Entries checked per parameter tensor; None checks all of them.
        tolerance: Maximum allowed relative error.

    Returns:
        Per component, a report holding the worst error per parameter over
        all seeds.
    """

    names = list(components) if components is not None else list(COMPONENTS)
    results: dict[str, GradCheckReport] = {}

    for name in names:
        merged = GradCheckReport(tolerance=tolerance)
        for seed in seeds:
            rng = np.random.default_rng(seed)
            forward, params = COMPONENTS[name](rng)
            report = grad_check(
                forward, params, samples=samples, rng=rng, tolerance=tolerance
            )
            for param, error in report.errors.items():
                merged.errors[param] = max(error, merged.errors.get(param, 0.0))

        status = "ok" if merged.passed else "FAILED"
        logger.info("%s: max relative error %.2e %s", name, merged.max_error, status)
        results[name] = merged

    return results
