"""Smoke test for the spectramech_py extension.

Build first, either with `maturin develop -m crates/python/Cargo.toml`
or by copying target/release/libspectramech_py.so next to this file as
spectramech_py.so.
"""

import math
import pathlib

import spectramech_py as sm

ROOT = pathlib.Path(__file__).resolve().parent.parent

FD = """
schema_version = 1
model = "fd"
bandwidth = 1.0
noise_density = 1.0

[[users]]
type = { kind = "uniform", min = 0.0, max = 1.0 }
gain = { kind = "deterministic", value = 1.0 }
transmit_power = 1.0
"""


def main():
    s = sm.Scenario.from_toml(FD)
    assert s.model == "fd" and s.num_users == 1

    out = s.allocate([0.8])
    assert out["bandwidth"] == [1.0]
    # One user: tax is ψ(W)/2 = ln(2)/2 once the virtual type is positive.
    assert abs(out["payments"][0] - math.log(2) / 2) <= out["tax_error_bounds"][0] + 1e-12

    assert s.virtual_types([0.75]) == [0.5]
    assert s.interim(0, 0.8)["expected_rate"]["std_error"] == 0.0

    report = s.verify(suite="all", grid_points=9)
    assert report["passed"], report

    try:
        sm.Scenario.from_toml(FD.replace("max = 1.0", "max = 0.0"))
    except ValueError as e:
        assert "max > min" in str(e)
    else:
        raise AssertionError("degenerate support accepted")

    ss = sm.Scenario.from_file(str(ROOT / "configs" / "ss_two_users.toml"))
    a = ss.allocate([0.9, 1.0])
    assert a == ss.allocate([0.9, 1.0])
    assert sum(a["power"]) <= 3.0 + 1e-9
    rev = ss.revenue(mc_samples=64)
    assert rev["via_payments"]["mean"] <= rev["omniscient_bound"]["mean"]

    print("smoke test passed")


if __name__ == "__main__":
    main()
