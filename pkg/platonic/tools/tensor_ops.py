"""Irreducible tensor operators T_kq of a spin-j sector."""
from functools import lru_cache

import numpy as np
from sympy import Rational
from sympy.physics.wigner import clebsch_gordan

from tools.spin_core import m_values


@lru_cache(maxsize=16)
def tensor_operators(two_j: int) -> dict[tuple[int, int], np.ndarray]:
    """
    T_kq = sum_{m,m'} (-1)^(j-m') <j m; j -m' | k q> |m><m'| for k = 0..2j.

    Normalized so Tr(T_kq^dagger T_k'q') = delta_kk' delta_qq'.
    """
    j = Rational(two_j, 2)
    ms = m_values(two_j)
    dim = two_j + 1
    operators = {}
    for k in range(two_j + 1):
        for q in range(-k, k + 1):
            op = np.zeros((dim, dim), dtype=complex)
            for a, m in enumerate(ms):
                b = a + q  # m' = m - q sits q rows further down
                if not 0 <= b < dim:
                    continue
                m_prime = Rational(int(round(2 * ms[b])), 2)
                m_sym = Rational(int(round(2 * m)), 2)
                cg = clebsch_gordan(j, j, k, m_sym, -m_prime, q)
                if cg != 0:
                    op[a, b] = (-1) ** int(j - m_prime) * float(cg)
            op.setflags(write=False)
            operators[(k, q)] = op
    return operators


def multipole_coefficients(block: np.ndarray, two_j: int) -> dict[tuple[int, int], complex]:
    """rho_kq = Tr(block T_kq^dagger)."""
    return {
        key: complex(np.sum(block * op.conj()))
        for key, op in tensor_operators(two_j).items()
    }
