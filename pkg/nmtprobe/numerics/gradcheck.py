"""
Central finite-difference checking of reverse-mode gradients.
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from nmtprobe.constants import GRADCHECK_EPS, GRADCHECK_FLOOR, GRADCHECK_TOLERANCE
from nmtprobe.errors import GradCheckError
from nmtprobe.numerics.params import Parameter, clear_grad, zero_grad
from nmtprobe.numerics.tensor import Tensor, backward, no_grad, precision

logger = logging.getLogger(__name__)

ForwardFn = Callable[[], Tensor]


@dataclass
class GradCheckReport:
    """Maximum relative error per parameter name."""

    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = GRADCHECK_TOLERANCE

    @property
    def max_error(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error < self.tolerance

    def failures(self) -> list[str]:
        return [name for name, err in self.errors.items() if err >= self.tolerance]


def relative_error(
    analytic: float,
    numeric: float,
    floor: float = GRADCHECK_FLOOR,
) -> float:
    """
    |a − n| / max(|a|, |n|, floor).

    Note:
        The floor keeps gradients that are zero up to rounding from reading as
        total disagreement.

    Examples:
        >>> relative_error(1.0, 1.0)
        0.0

        >>> relative_error(2.0, 1.0)
        0.5
    """

    scale = max(abs(analytic), abs(numeric), floor)

    return abs(analytic - numeric) / scale


def grad_check(
    forward: ForwardFn,
    params: Sequence[Parameter],
    eps: float = GRADCHECK_EPS,
    samples: Optional[int] = None,
    rng: Optional[np.random.Generator] = None,
    tolerance: float = GRADCHECK_TOLERANCE,
) -> GradCheckReport:
    """
    Compares backward gradients against (f(p+eps) − f(p−eps)) / (2·eps).

    Note:
        Parameters are promoted to float64 for the duration of the check and
        restored afterwards. `forward` must read parameters through their
        tensors and build any inputs inside the call so they pick up float64 too.

    Args:
        forward: Zero-argument function returning a scalar loss.
        params: Parameters to check.
        eps: Finite-difference step.
        samples: Entries checked per parameter; None checks every entry.
        rng: Chooses sampled entries. Required when `samples` is set.
        tolerance: Threshold used by `GradCheckReport.passed`.

    Returns:
        A GradCheckReport with the worst relative error per parameter.

    Errors:
        GradCheckError when two evaluations of `forward` disagree.
    """

    originals = {p.name: p.tensor.data for p in params}
    report = GradCheckReport(tolerance=tolerance)

    with precision("float64"):
        for param in params:
            param.tensor.data = originals[param.name].astype(np.float64)

        try:
            with no_grad():
                first = forward().item()
                second = forward().item()
            if first != second:
                raise GradCheckError(
                    f"forward is not deterministic: {first!r} then {second!r}"
                )

            zero_grad(params)
            backward(forward())
            analytic = {
                p.name: np.array(p.grad, dtype=np.float64).reshape(-1) for p in params
            }

            for param in params:
                flat = param.tensor.data.reshape(-1)
                if samples is None or samples >= flat.size:
                    entries = np.arange(flat.size)
                else:
                    if rng is None:
                        raise GradCheckError("sampling entries needs an rng")
                    entries = np.sort(rng.choice(flat.size, samples, replace=False))

                worst = 0.0
                for i in entries:
                    original = flat[i]
                    with no_grad():
                        flat[i] = original + eps
                        plus = forward().item()
                        flat[i] = original - eps
                        minus = forward().item()
                    flat[i] = original

                    numeric = (plus - minus) / (2.0 * eps)
                    worst = max(
                        worst, relative_error(float(analytic[param.name][i]), numeric)
                    )

                report.errors[param.name] = worst
                logger.debug("gradcheck %s: max relative error %.3e", param.name, worst)
        finally:
            for param in params:
                param.tensor.data = originals[param.name]
            clear_grad(params)

    return report
