"""Independent reference implementations used only by the tests.

* A truncated Fock-space model of a small lattice: exact Lindblad time
  derivatives of first and second moments for an arbitrary density matrix.
* A set-partition expansion of operator moments with all cumulants of order
  three and higher dropped, written without reference to the library's
  closure formulas.
"""
from __future__ import annotations

import itertools

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp


def annihilators(sites: int, nmax: int) -> list:
    """Sparse ``a_j`` on the product space with ``nmax + 1`` levels per site."""
    d = nmax + 1
    a1 = sp.diags(np.sqrt(np.arange(1, d)), 1, format="csr")
    eye = sp.identity(d, format="csr")
    ops = []
    for j in range(sites):
        factors = [a1 if k == j else eye for k in range(sites)]
        op = factors[0]
        for f in factors[1:]:
            op = sp.kron(op, f, format="csr")
        ops.append(op)
    return ops


def hamiltonian(params, ops):
    L = params.sites
    labels = params.site_labels
    eta = params.eta()
    H = sp.csr_matrix(ops[0].shape, dtype=complex)
    for j in range(L):
        a = ops[j]
        ad = a.conj().T
        H = H + params.tilt * (labels[j] - params.pump_center) * (ad @ a)
        H = H + params.kerr * (ad @ ad @ a @ a)
        H = H + eta[j] * (a + ad)
        if j + 1 < L:
            hop = ad @ ops[j + 1]
            H = H - params.hopping * (hop + hop.conj().T)
    return H


def lindblad_derivative(rho, params, ops):
    """``d rho/dt = -i[H, rho] + kappa sum_j (2 a rho a^+ - a^+ a rho - rho a^+ a)``."""
    H = hamiltonian(params, ops)
    out = -1j * (H @ rho - (H.T @ rho.T).T)
    for a in ops:
        ad = a.conj().T
        n = ad @ a
        out = out + params.loss * (2.0 * (a @ (ad.T @ rho.T).T) - n @ rho - (n.T @ rho.T).T)
    return np.asarray(out)


def moments(rho, ops):
    """``<a_j>``, ``<a_j^+ a_k>``, ``<a_j a_k>`` for a (possibly non-normalised) operator ``rho``."""
    L = len(ops)

    def ev(op):
        return complex(np.sum(op.T.multiply(rho)) if sp.issparse(op) else np.trace(op @ rho))

    alpha = np.array([ev(a) for a in ops])
    G = np.array([[ev(ops[j].conj().T @ ops[k]) for k in range(L)] for j in range(L)])
    A = np.array([[ev(ops[j] @ ops[k]) for k in range(L)] for j in range(L)])
    return alpha, G, A


def expectation(rho, product):
    return complex(np.sum(product.T.multiply(rho)))


def gaussian_state(sites: int, nmax: int, rng, *, displacement=0.35, thermal=0.08, squeeze=0.12, mix=0.4):
    """Random mixed Gaussian state: thermal, squeezed, beam-split and displaced.

    Amplitudes are kept small so the truncation at ``nmax`` is negligible.
    """
    ops = annihilators(sites, nmax)
    d = nmax + 1
    # product of thermal states
    nbar = thermal * rng.uniform(0.3, 1.0, sites)
    p1 = [(nb / (1 + nb)) ** np.arange(d) / (1 + nb) for nb in nbar]
    diag = p1[0]
    for p in p1[1:]:
        diag = np.kron(diag, p)
    rho = np.diag(diag / diag.sum()).astype(complex)

    gen = sp.csr_matrix(ops[0].shape, dtype=complex)
    for j, a in enumerate(ops):
        ad = a.conj().T
        xi = squeeze * rng.uniform(0.3, 1.0) * np.exp(2j * np.pi * rng.uniform())
        gen = gen + 0.5 * (np.conj(xi) * (a @ a) - xi * (ad @ ad))
    for j in range(sites - 1):
        theta = mix * rng.uniform(-1, 1) * np.exp(1j * rng.uniform(0, np.pi))
        gen = gen + theta * (ops[j].conj().T @ ops[j + 1]) - np.conj(theta) * (ops[j + 1].conj().T @ ops[j])
    for j, a in enumerate(ops):
        beta = displacement * rng.uniform(0.2, 1.0) * np.exp(2j * np.pi * rng.uniform())
        gen = gen + beta * a.conj().T - np.conj(beta) * a
    U = sla.expm(gen.toarray())
    rho = U @ rho @ U.conj().T
    return 0.5 * (rho + rho.conj().T), ops


# --------------------------------------------------------------------------
# moment expansion over set partitions


def _set_partitions(items):
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in _set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def gaussian_moment(ops, first, second):
    """Moment of an ordered product when every joint cumulant beyond order two vanishes.

    ``first(op)`` gives ``<op>``; ``second(op1, op2)`` gives ``<op1 op2>`` in
    the stated order. The moment is the sum over set partitions of products
    of cumulants, each block keeping the original operator order.
    """
    def cumulant(block):
        if len(block) == 1:
            return first(ops[block[0]])
        if len(block) == 2:
            i, k = sorted(block)
            return second(ops[i], ops[k]) - first(ops[i]) * first(ops[k])
        return 0.0

    total = 0.0
    for part in _set_partitions(list(range(len(ops)))):
        term = 1.0
        for block in part:
            term = term * cumulant(block)
            if term == 0:
                break
        total += term
    return total


def all_normal_ordered(sites: int, order: int):
    """Every normal-ordered product of ``order`` operators on ``sites`` sites."""
    singles = [(j, d) for j in range(sites) for d in (True, False)]
    for combo in itertools.product(singles, repeat=order):
        flags = [d for _, d in combo]
        if flags == sorted(flags, reverse=True):
            yield list(combo)
