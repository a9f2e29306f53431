"""Shannon information of symmetric (two-quadrature) protocols, for contrast.

Eve's information is identical for the squeezed and coherent TD variants at
equal EPR variance, so only the Alice-Bob side is computed here.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np


class TdScenario(NamedTuple):
    v: float
    chi_tot: float

    def check(self):
        if np.any(np.asarray(self.v) < 1):
            raise ValueError("EPR variance v must be >= 1")
        if np.any(np.asarray(self.chi_tot) < 0):
            raise ValueError("chi_tot must be >= 0")
        return self


def td_mi_squeezed(s: TdScenario):
    v, chi = s.check()
    return 0.5 * np.log2((v + chi) / (1.0 / v + chi))


def td_mi_coherent(s: TdScenario):
    v, chi = s.check()
    return 0.5 * np.log2((v + chi) / (1.0 + chi))


def ud_mi_rewritten(v, r, chi_tot):
    """UD mutual information written in terms of the EPR variance ``v``.

    Coincides with the closed form in ``security.mutual_information`` once
    ``v**2 = 1 + r * v_mod``. It grows with ``r`` when ``v_mod`` is held
    fixed (so ``v`` moves with ``r``); at fixed ``v`` and ``chi_tot > 0`` it
    falls instead.
    """
    TdScenario(v, chi_tot).check()
    if np.any(np.asarray(r) <= 0):
        raise ValueError("r must be positive")
    return 0.5 * np.log2((v * v / r + chi_tot) / (1.0 / r + chi_tot))
