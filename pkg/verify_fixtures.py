import logging
import os
import sys

import mpmath as mp

# Add app directory to path
sys.path.append(os.path.join(os.path.dirname(os.path.abspath(__file__)), 'app'))

import asymptotics
from asymptotics import ContinuousProblemParams as Q
from fieldsim import kuiper_half_tail

logger = logging.getLogger("verify_fixtures")

mp.mp.dps = 50
REL_TOL = 1e-9


def _psi(x):
    return mp.ncdf(-mp.mpf(x))


def _p1(c, d, u):
    c, d, u = mp.mpf(c), mp.mpf(d), mp.mpf(u)
    return 2 * c * (c - d) * u ** 2 * mp.exp(-2 * c * d * u ** 2)


def _p2(c, d, u):
    c, d, u = mp.mpf(c), mp.mpf(d), mp.mpf(u)
    return 32 * d ** 2 * (d + c) ** 3 / (2 * d + c) ** 3 * u ** 2 * mp.exp(-2 * d * (c + d) * u ** 2)


def _p3(c, d, u):
    c, d, u = mp.mpf(c), mp.mpf(d), mp.mpf(u)
    return 32 * c * d / mp.sqrt(c * (c - 4 * d)) * u ** 2 * mp.exp(-2 * c * d * u ** 2)


def _p4(d):
    return 2 * mp.mpf(d) ** 4 * _psi(d)


def _free2(c, u):
    c, u = mp.mpf(c), mp.mpf(u)
    return 4 * u ** 2 * mp.exp(-(2 * u ** 2 + 2 * c * u))


def _free3(c, u):
    c, u = mp.mpf(c), mp.mpf(u)
    return 4 * u ** 2 * mp.exp(-(2 * u + c / 2) ** 2 / 2)


def _kuiper(u, terms=5):
    u = mp.mpf(u)
    return mp.fsum((4 * k ** 2 * u ** 2 - 1) * mp.exp(-2 * k ** 2 * u ** 2) for k in range(1, terms + 1))


def fixtures():
    """(name, computed, reference) for every closed-form fixture."""
    table = asymptotics.TableConstantProvider()
    brownian = asymptotics.AsymptoticParams(s1=0.5, s2=1.0, a=1.0, b=0.5, alpha=1.0, beta=2.0)
    return [
        ("Psi(4)", asymptotics.norm_survival(4.0), _psi(4)),
        ("p1(1.5, 0.5, 2)", asymptotics.p1_fixed(Q(1.5, 0.5, 2.0)).value, _p1(1.5, 0.5, 2)),
        ("p2(1, 1, 1)", asymptotics.p2_fixed(Q(1.0, 1.0, 1.0)).value, _p2(1, 1, 1)),
        ("p2(0.5, 0.25, 2)", asymptotics.p2_fixed(Q(0.5, 0.25, 2.0)).value, _p2(0.5, 0.25, 2)),
        ("p3(5, 1, 1)", asymptotics.p3_fixed(Q(5.0, 1.0, 1.0)).value, _p3(5, 1, 1)),
        ("p3(10, 1, 1)", asymptotics.p3_fixed(Q(10.0, 1.0, 1.0)).value, _p3(10, 1, 1)),
        ("p4(4)", asymptotics.p4_tail(4.0).value, _p4(4)),
        ("p4(5)", asymptotics.p4_tail(5.0).value, _p4(5)),
        ("p4(2)", asymptotics.p4_tail(2.0).value, _p4(2)),
        ("free2(1, 1)", asymptotics.p2_free_delta(1.0, 1.0).value, _free2(1, 1)),
        ("free2(0, 1.5)", asymptotics.p2_free_delta(0.0, 1.5).value, _free2(0, 1.5)),
        ("free3(2, 1)", asymptotics.p3_free_delta(2.0, 1.0).value, _free3(2, 1)),
        ("free3(0, 1)", asymptotics.p3_free_delta(0.0, 1.0).value, _free3(0, 1)),
        ("kuiper(1.25)", kuiper_half_tail(1.25), _kuiper(1.25)),
        ("kuiper(1.5)", kuiper_half_tail(1.5), _kuiper(1.5)),
        ("kuiper(1.75)", kuiper_half_tail(1.75), _kuiper(1.75)),
        ("brownian tail constant", asymptotics.theorem1_tail(brownian, 5.0, table).constant,
         mp.sqrt(mp.pi / 2)),
    ]


def check_fixtures(rel_tol: float = REL_TOL):
    """Names of fixtures whose relative error exceeds rel_tol."""
    failures = []
    for name, computed, reference in fixtures():
        error = abs(mp.mpf(computed) / reference - 1)
        if error > rel_tol:
            logger.error(f"{name}: computed {computed!r}, reference {mp.nstr(reference, 17)} (rel err {float(error):.3g})")
            failures.append(name)
        else:
            logger.info(f"{name}: {computed!r} ok")
    return failures


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format='%(asctime)s [%(levelname)s] %(message)s')
    logger.info("--- VERIFYING CLOSED-FORM FIXTURES ---")
    failed = check_fixtures()
    if failed:
        logger.error(f"{len(failed)} fixture(s) failed: {', '.join(failed)}")
        sys.exit(1)
    logger.info("All fixtures match")
