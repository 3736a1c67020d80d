import numpy as np
import pytest

from hiermc.diagnostics import DrawMatrix
from hiermc.drawsio import (
    read_draws,
    read_table_csv,
    write_chain_csv,
    write_draws,
    write_table_csv,
)
from hiermc.numerics import RngStream


def sample_draws(c=2, n=25, d=3, seed=0, with_stats=True):
    rng = RngStream(seed, 0)
    values = rng.normal((c, n, d)) * np.pi  # awkward decimals on purpose
    lp = rng.normal((c, n)) * 100
    stats = {}
    if with_stats:
        stats = {
            "accept_stat": rng.uniform(size=(c, n)),
            "stepsize": np.full((c, n), 0.0731927),
            "int_steps": np.floor(rng.uniform(1, 30, (c, n))),
            "treedepth": np.floor(rng.uniform(1, 8, (c, n))),
            "divergent": (rng.uniform(size=(c, n)) < 0.1).astype(float),
            "energy": rng.normal((c, n)) * 50,
        }
    return DrawMatrix(names=[f"par.{i}" for i in range(1, d + 1)], values=values,
                      lp=lp, stats=stats)


class TestHeader:
    def test_exact_header_order(self, tmp_path):
        draws = sample_draws()
        path = write_chain_csv(tmp_path / "c1.csv", draws, 0)
        header = path.read_text().splitlines()[0]
        assert header == ("chain,iter,lp__,accept_stat__,stepsize__,int_steps__,"
                          "treedepth__,divergent__,energy__,par.1,par.2,par.3")

    def test_absent_fields_written_empty(self, tmp_path):
        draws = sample_draws(with_stats=False)
        path = write_chain_csv(tmp_path / "c1.csv", draws, 0)
        first = path.read_text().splitlines()[1].split(",")
        # accept_stat..energy columns are all empty
        assert first[3:9] == [""] * 6

    def test_reader_rejects_wrong_header(self, tmp_path):
        p = tmp_path / "bad.csv"
        p.write_text("a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            read_draws([p])


class TestRoundTrip:
    def test_bit_exact_values(self, tmp_path):
        draws = sample_draws(c=3, n=40, d=4, seed=5)
        paths = write_draws(tmp_path, "run", draws)
        assert len(paths) == 3
        back = read_draws(paths)
        assert back.names == draws.names
        assert np.array_equal(back.values, draws.values)
        assert np.array_equal(back.lp, draws.lp)
        for key in ("accept_stat", "stepsize", "int_steps", "treedepth", "energy"):
            assert np.array_equal(back.stats[key], draws.stats[key]), key

    def test_zero_draws_header_only(self, tmp_path):
        draws = sample_draws(c=1, n=0)
        path = write_chain_csv(tmp_path / "empty.csv", draws, 0)
        lines = path.read_text().splitlines()
        assert len(lines) == 1
        assert lines[0].startswith("chain,iter,lp__")

    def test_17_digit_serialization(self, tmp_path):
        x = 0.1 + 0.2  # famously not 0.3
        draws = sample_draws(c=1, n=1, d=1)
        draws.values[0, 0, 0] = x
        path = write_chain_csv(tmp_path / "c.csv", draws, 0)
        back = read_draws([path])
        assert back.values[0, 0, 0] == x

    def test_mismatched_chain_lengths_rejected(self, tmp_path):
        d1 = sample_draws(c=1, n=10)
        d2 = sample_draws(c=1, n=11)
        p1 = write_chain_csv(tmp_path / "a.csv", d1, 0)
        p2 = write_chain_csv(tmp_path / "b.csv", d2, 0)
        with pytest.raises(ValueError, match="differing draw counts"):
            read_draws([p1, p2])


class TestTableCsv:
    def test_round_trip(self, tmp_path):
        rows = [{"a": 1.5, "b": "x"}, {"a": float("nan"), "b": "y"}]
        path = write_table_csv(tmp_path / "t.csv", rows, ["a", "b"])
        back = read_table_csv(path)
        assert back[0]["a"] == 1.5
        assert np.isnan(back[1]["a"])
        assert back[1]["b"] == "y"
