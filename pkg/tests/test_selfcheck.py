import numpy as np

from ifasnet import selfcheck
from ifasnet import tensor as T
from ifasnet.cli import main


def broken_tanh(a):
    a = T.as_tensor(a)
    out = np.tanh(a.data)
    return T._emit("tanh", (a,), out, lambda g: (g * (1.0 - out),))  # derivative should be 1 - out**2


def test_injected_vjp_bug_fails_selfcheck(monkeypatch, capsys):
    monkeypatch.setattr(T, "tanh", broken_tanh)
    ok, detail = selfcheck.check_primitives(seeds=2)
    assert not ok and "tanh" in detail
    err, _ = selfcheck.preset_gradient_error("ifasnet", 0)
    assert err > 1e-4
    assert main(["selfcheck", "--seeds", "1"]) != 0
    assert "FAIL  gradients/primitives" in capsys.readouterr().out


def test_individual_checks_pass():
    for fn in (selfcheck.check_framing, selfcheck.check_ncc, selfcheck.check_beamformer,
               selfcheck.check_checkpoint):
        ok, detail = fn()
        assert ok, detail


def test_crash_counts_as_failure():
    res = selfcheck._timed("boom", lambda: 1 / 0)
    assert not res.passed and "ZeroDivisionError" in res.detail
