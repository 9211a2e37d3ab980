"""Smoke test for the partdec Python extension.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import json
import math
import tempfile
from pathlib import Path

import numpy as np

import partdec


def check_decomposition():
    d = partdec.Decomposition("J=[ (1,2), (2,1) ]")
    assert d.blocks == [(1, 2), (2, 1)]
    assert d.dim == 4 and d.num_blocks == 2
    assert not d.is_randomized_case()
    assert partdec.Decomposition(d.blocks) == d
    assert partdec.Decomposition.uniform(3, 2).is_randomized_case()
    try:
        partdec.Decomposition("J=[ (0,2) ]")
    except ValueError:
        pass
    else:
        raise AssertionError("zero block dimension accepted")


def check_bell_pair():
    # identity channel on half a Bell pair: lhs 3/2, bound 2
    rep = partdec.run_experiment('mode = "decoupling-j1"\ndim = 2\nchannel = "identity"\nsamples = 200\n')
    assert math.isclose(rep.lhs_mean, 1.5, rel_tol=1e-9), rep
    assert math.isclose(rep.rhs_total, 2.0, rel_tol=1e-6), rep
    assert rep.passed()
    record = json.loads(rep.to_json())
    assert record["J"] == 1 and record["N"] == 200


def check_randomized():
    cfg = (
        'mode = "randomized-pd"\n'
        'decomposition = "J=[ (1,2), (1,2), (1,2) ]"\n'
        'state = "random(3)"\n'
        'channel = "random-kraus(3, 5)"\n'
        "samples = 300\n"
    )
    a = partdec.run_experiment(cfg, seed=4)
    b = partdec.run_experiment(cfg, seed=4)
    assert a.to_json() == b.to_json()
    assert a.passed() and a.J == 3 and a.r == 2
    assert set(a.rhs_terms) >= {"alpha_term", "beta_term"}
    try:
        partdec.run_experiment('mode = "randomized-pd"\ndecomposition = "J=[ (1,2), (1,3) ]"\n')
    except ValueError as e:
        assert "CC1" in str(e)
    else:
        raise AssertionError("CC1 violation accepted")


def check_random_batches():
    reps = partdec.run_random("nonrandomized-pd", 2, seed=1, samples=200)
    reps += partdec.run_random("randomized-pd", 2, seed=1, samples=200)
    assert all(r.passed() for r in reps)


def check_entropies():
    bell = np.zeros((4, 4), dtype=complex)
    bell[np.ix_([0, 3], [0, 3])] = 0.5
    factors = [("A", 2), ("B", 2)]
    hmin, lo, hi = partdec.h_min(bell.tolist(), factors, ["B"])
    assert abs(hmin + 1.0) < 1e-6 and lo <= hmin <= hi
    hmax, _, _ = partdec.h_max(bell.tolist(), factors, ["B"])
    assert abs(hmax + 1.0) < 1e-6
    product = np.kron(np.eye(2) / 2, np.eye(2) / 2)
    assert abs(partdec.h_min(product.tolist(), factors, ["B"])[0] - 1.0) < 1e-6


def check_twirl():
    dist, tol, ok = partdec.verify_twirl(partdec.Decomposition.uniform(4, 2), 2000, 0)
    assert ok and dist <= tol


def check_cli_functions():
    with tempfile.TemporaryDirectory() as tmp:
        tmp = Path(tmp)
        suite = tmp / "suite.toml"
        suite.write_text(
            "[[experiment]]\n"
            'mode = "nonrandomized-pd"\n'
            'decomposition = "J=[ (1,2), (2,1) ]"\n'
            "samples = 100\n"
            "[[random]]\n"
            'mode = "randomized-pd"\n'
            "count = 2\n"
            "samples = 100\n"
        )
        code, manifest = partdec.sweep(str(suite), str(tmp / "out"))
        assert code == 0
        csv = partdec.plot_data(manifest).splitlines()
        assert csv[0] == "mode,J,r,N,lhs_mean,lhs_stderr,rhs_total,margin"
        assert len(csv) == 4
        try:
            partdec.verify(str(tmp / "missing.toml"), str(tmp / "o"))
        except OSError:
            pass
        else:
            raise AssertionError("missing config accepted")


if __name__ == "__main__":
    for check in [
        check_decomposition,
        check_bell_pair,
        check_randomized,
        check_random_batches,
        check_entropies,
        check_twirl,
        check_cli_functions,
    ]:
        check()
        print(f"ok  {check.__name__}")
    print("smoke test passed")
