import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fomlb import linops
from fomlb.algorithms import run_generic, run_penalty_class1, zero_rule, random_rule
from fomlb.instance import as_blocks, grad_f0
from fomlb.oracle import IterateHistory, Oracle, support_front, verify_class1, verify_class2
from fomlb.prox import prox_g


class TestOracleCalls:
    def test_oracle1_at_zero(self, c0):
        o = Oracle(c0)
        b = o.oracle1(np.zeros(c0.d), np.zeros(c0.n), 1.0)
        assert np.all(b.Ax == 0.0) and np.all(b.prox == 0.0) and np.all(b.Atz == 0.0)
        g = as_blocks(c0, b.grad)
        assert np.all(g[:, 0] != 0.0) and np.all(g[:, 1:] == 0.0)

    def test_oracle2_at_zero(self, c0):
        b = Oracle(c0).oracle2(np.zeros(c0.d), np.zeros(c0.nbar), np.zeros(c0.n), 1.0)
        for comp in (b.Abarx, b.Ax, b.Abarty, b.Atz, b.prox):
            assert np.all(comp == 0.0)
        assert np.array_equal(b.grad, grad_f0(c0, np.zeros(c0.d)))

    def test_counting(self, c0):
        o = Oracle(c0)
        o.oracle1(np.zeros(c0.d), np.zeros(c0.n), 1.0)
        o.oracle2(np.zeros(c0.d), np.zeros(c0.nbar), np.zeros(c0.n), 1.0)
        assert o.count == 2
        # consuming nothing still counts
        o.oracle1(np.ones(c0.d), np.zeros(c0.n), 1.0)
        assert o.count == 3 and [c.kind for c in o.transcript.calls] == [1, 2, 1]

    def test_components(self, c0, rng):
        x, z = rng.normal(size=c0.d), rng.normal(size=c0.n)
        b = Oracle(c0).oracle1(x, z, 0.2)
        assert np.array_equal(b.Ax, linops.apply(c0, "A", x))
        assert np.array_equal(b.Atz, linops.apply(c0, "A_adj", z))
        assert np.array_equal(b.prox, prox_g(c0, x, 0.2))

    def test_bundle_is_a_snapshot(self, c0, rng):
        x = rng.normal(size=c0.d)
        b = Oracle(c0).oracle1(x, np.zeros(c0.n), 1.0)
        want = grad_f0(c0, x)
        x[:] = 0.0
        assert np.array_equal(b.grad, want)

    def test_rejects_bad_input(self, c0):
        o = Oracle(c0)
        with pytest.raises(ValueError):
            o.oracle1(np.zeros(c0.d), np.zeros(c0.n), 0.0)
        with pytest.raises(ValueError):
            o.oracle1(np.zeros(c0.d + 1), np.zeros(c0.n), 1.0)
        with pytest.raises(ValueError):
            o.oracle2(np.zeros(c0.d), np.zeros(c0.nbar - 1), np.zeros(c0.n), 1.0)
        assert o.count == 0

    def test_transcript_jsonl(self, c0, tmp_path):
        tr = run_penalty_class1(c0, max_oracles=12)
        tr.verify(c0)
        path = tmp_path / "t.jsonl"
        tr.transcript.to_jsonl(path)
        rows = [json.loads(line) for line in path.read_text().splitlines()]
        assert len(rows) == 12
        assert set(rows[0]) == {"t", "kind", "eta", "J", "span_residual"}
        assert [r["t"] for r in rows] == [1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4]
        assert all(r["span_residual"] is not None for r in rows)


class TestSupportFront:
    def test_examples(self, c0):
        x = np.zeros(c0.d)
        assert support_front(x, c0.dbar) == 0
        x[2 * c0.dbar + 3] = 1e-300
        assert support_front(x, c0.dbar) == 4

    def test_one_step_from_zero(self, c0):
        tr = run_penalty_class1(c0, max_oracles=3)
        assert [r.J for r in tr.records] == [0, 1]


class TestVerifiers:
    def test_penalty_passes(self, c0):
        rep = run_penalty_class1(c0, max_oracles=150).verify(c0)
        assert rep.passed and rep.max_residual <= 1e-10

    def test_zero_run_passes(self, c0):
        for cls in (1, 2):
            rep = run_generic(c0, zero_rule, cls, max_oracles=30).verify(c0)
            assert rep.passed and rep.max_residual == 0.0

    def test_injection_of_abar_gram_fails(self, c0):
        base = random_rule(c0, 7)

        def rule(step):
            choice = base(step)
            if step.t == 5:
                # x^(t-1) is generic here, so Abar^T Abar x^(t-1) leaves the class-1 span
                x_prev = step.x_gens[-3]
                assert np.any(linops.apply(c0, "Abar", x_prev) != 0.0)
                choice.inject = linops.apply(c0, "AbarTAbar", x_prev) * 1e-3
            return choice

        rep = run_generic(c0, rule, 1, max_oracles=24).verify(c0)
        assert not rep.passed and rep.first_failure == 5

    def test_truncated_history(self, c0):
        h = IterateHistory(1, xs=[np.zeros(c0.d), np.zeros(c0.d)], xis=[], etas=[])
        with pytest.raises(ValueError):
            verify_class1(c0, h)
        with pytest.raises(ValueError):
            verify_class2(c0, h)

    def test_wrong_class(self, c0):
        tr = run_generic(c0, zero_rule, 2, max_oracles=6)
        with pytest.raises(ValueError):
            verify_class1(c0, tr.history)


@given(seed=st.integers(0, 10_000), cls=st.sampled_from([1, 2]))
def test_random_members_verify(c0, seed, cls):
    tr = run_generic(c0, random_rule(c0, seed), cls, max_oracles=30)
    assert tr.verify(c0).passed
