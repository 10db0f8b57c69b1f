import csv
import io
import json
import math

import pytest
import yaml
from hypothesis import given, settings
from hypothesis import strategies as st

from metastable.cli import main
from metastable.config import parse_config, serialize
from metastable.errors import ConfigError
from metastable.potential import BoundaryCondition

MINIMAL = """\
potential:
  kind: double_well
  gamma: 1
  bc: neumann
grid:
  n: 16
"""


def write(tmp_path, text, name="run.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


# ---------------------------------------------------------------- parsing


def test_minimal_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.potential.kind == "double_well"
    assert cfg.potential.bc is BoundaryCondition.NEUMANN
    assert cfg.n == (16,)
    assert cfg.simulate.dt == 1e-3
    assert cfg.simulate.scheme == "semi-implicit"
    assert cfg.kramers.eta == 1e-8
    assert cfg.output.format == "json"
    assert cfg.simulate.epsilon == ()


def test_negative_epsilon_names_key():
    with pytest.raises(ConfigError, match=r"simulate\.epsilon") as exc:
        parse_config(MINIMAL + "simulate:\n  epsilon: [-0.1]\n")
    assert "line 8" in str(exc.value)


def test_unknown_key_in_block():
    text = MINIMAL.replace("  bc: neumann\n", "  bc: neumann\n  colour: red\n")
    with pytest.raises(ConfigError, match=r"line 5: potential\.colour"):
        parse_config(text)


def test_unknown_block():
    with pytest.raises(ConfigError, match="plot"):
        parse_config(MINIMAL + "plot: {dpi: 300}\n")


def test_missing_potential():
    with pytest.raises(ConfigError, match="potential"):
        parse_config("grid:\n  n: 16\n")


@pytest.mark.parametrize(
    "extra",
    [
        "simulate:\n  samples: 0\n",
        "simulate:\n  dt: 0\n",
        "simulate:\n  scheme: leapfrog\n",
        "output:\n  format: xml\n",
        "kramers:\n  targets: upper\n",
    ],
)
def test_invalid_values(extra):
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + extra)


def test_invalid_potential():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("gamma: 1", "gamma: -2"))
    with pytest.raises(ConfigError):
        parse_config(MINIMAL.replace("kind: double_well", "kind: polynomial\n  coefficients: [0, 1, -1]"))


def test_polynomial_config():
    cfg = parse_config(MINIMAL.replace("kind: double_well", "kind: polynomial\n  coefficients: [0, 0.1, -0.5, 0, 0.25]"))
    assert cfg.potential.coefficients == (0.0, 0.1, -0.5, 0.0, 0.25)


def test_invalid_yaml():
    with pytest.raises(ConfigError):
        parse_config("potential: [unclosed\n")


def _doc():
    # even degree 2 or 4 with a positive leading coefficient
    coeff_lists = st.one_of(
        st.lists(st.floats(-2, 2), min_size=2, max_size=2), st.lists(st.floats(-2, 2), min_size=4, max_size=4)
    ).map(lambda c: c + [0.5])
    potential = st.one_of(
        st.fixed_dictionaries(
            {"kind": st.just("double_well"), "gamma": st.floats(0.01, 10), "bc": st.sampled_from(["neumann", "dirichlet"])}
        ),
        st.fixed_dictionaries(
            {
                "kind": st.just("polynomial"),
                "coefficients": coeff_lists,
                "gamma": st.floats(0.01, 10),
                "bc": st.sampled_from(["neumann", "dirichlet"]),
            }
        ),
    )
    return st.fixed_dictionaries(
        {
            "potential": potential,
            "grid": st.fixed_dictionaries({"n": st.one_of(st.integers(1, 2048), st.lists(st.integers(1, 2048), min_size=2, max_size=4))}),
            "kramers": st.fixed_dictionaries(
                {
                    "source": st.integers(0, 5),
                    "targets": st.one_of(st.sampled_from(["lower", "others"]), st.lists(st.integers(0, 5), min_size=1, max_size=3)),
                    "eta": st.floats(1e-12, 1e-2),
                }
            ),
            "simulate": st.fixed_dictionaries(
                {
                    "epsilon": st.lists(st.floats(0.01, 1.0), min_size=0, max_size=5),
                    "rho": st.floats(0.05, 2.0),
                    "dt": st.floats(1e-5, 1e-2),
                    "scheme": st.sampled_from(["semi-implicit", "explicit"]),
                    "samples": st.integers(2, 10_000),
                    "seed": st.integers(0, 2**64 - 1),
                    "max_time": st.one_of(st.none(), st.floats(1.0, 1e6)),
                }
            ),
            "output": st.fixed_dictionaries({"format": st.sampled_from(["json", "csv"]), "path": st.one_of(st.none(), st.just("out.json"))}),
        }
    )


@settings(max_examples=80, deadline=None)
@given(_doc())
def test_round_trip(doc):
    cfg = parse_config(yaml.safe_dump(doc))
    text = serialize(cfg)
    again = parse_config(text)
    assert again == cfg
    assert serialize(again) == text


# ---------------------------------------------------------------- CLI


def test_cli_analyze(tmp_path, capsys):
    assert main(["analyze", "--config", write(tmp_path, MINIMAL)]) == 0
    rep = json.loads(capsys.readouterr().out)
    rows = rep["stationary_points"]
    assert len(rows) == 3
    assert sorted(r["index"] for r in rows) == [0, 0, 1]
    by_mean = sorted(rows, key=lambda r: r["mean_value"])
    assert [r["index"] for r in by_mean] == [0, 1, 0]
    assert rep["edges"][0]["endpoints"] == [0, 1]


def test_cli_predict(tmp_path, capsys):
    text = MINIMAL + "kramers:\n  source: 0\n  targets: [1]\nsimulate:\n  epsilon: [0.1]\n"
    assert main(["predict", "--config", write(tmp_path, text)]) == 0
    rep = json.loads(capsys.readouterr().out)
    (row,) = [p for p in rep["predictions"] if p["provenance"] == "continuum"]
    assert row["activation_energy"] == pytest.approx(0.25, abs=1e-12)
    assert row["prefactor"] == pytest.approx(3.48412, abs=1e-5)
    assert row["predicted_mean"] == pytest.approx(42.45, abs=0.01)


def test_cli_validate_zero_samples(tmp_path, capsys):
    text = MINIMAL + "simulate:\n  epsilon: [0.1, 0.2, 0.3]\n  samples: 0\n"
    assert main(["validate", "--config", write(tmp_path, text)]) == 2
    assert "simulate.samples" in capsys.readouterr().err


def test_cli_missing_file(tmp_path):
    assert main(["analyze", "--config", str(tmp_path / "nope.yaml")]) == 2


def test_cli_numerical_error_exit_code(tmp_path, capsys):
    gamma = 1.0 / (4 * 17**2 * math.sin(math.pi / 34) ** 2)
    text = MINIMAL.replace("gamma: 1", f"gamma: {gamma!r}").replace("neumann", "dirichlet")
    assert main(["analyze", "--config", write(tmp_path, text)]) == 3
    assert "landscape" in capsys.readouterr().err


def test_cli_csv_output(tmp_path):
    out = tmp_path / "rep.csv"
    text = MINIMAL + "kramers:\n  source: 0\n  targets: [1]\nsimulate:\n  epsilon: [0.1]\n"
    assert main(["predict", "--config", write(tmp_path, text), "--format", "csv", "--output", str(out)]) == 0
    rows = list(csv.DictReader(io.StringIO(out.read_text())))
    assert set(rows[0]) == {"table", "quantity", "n", "epsilon", "id", "value"}
    pref = [r for r in rows if r["table"] == "predictions" and r["quantity"] == "prefactor" and r["id"] == "continuum"]
    assert float(pref[0]["value"]) == pytest.approx(3.48412, abs=1e-5)


def test_cli_seed_override(tmp_path, capsys):
    text = MINIMAL + "kramers:\n  source: 0\n  targets: [1]\nsimulate:\n  epsilon: [0.3]\n  samples: 4\n  seed: 5\n"
    path = write(tmp_path, text)
    assert main(["simulate", "--config", path, "--seed", "99"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["metadata"]["seed"] == 99
    assert rep["simulations"][0]["seed"] == 99
    assert main(["simulate", "--config", path, "--seed", str(2**64)]) == 2


def test_cli_validate_verdict_failure(tmp_path, capsys):
    # too few samples for the KS test, so the verdict cannot pass
    text = MINIMAL + "kramers:\n  source: 0\n  targets: [1]\nsimulate:\n  epsilon: [0.3, 0.4, 0.5]\n  samples: 10\n  seed: 1\n"
    assert main(["validate", "--config", write(tmp_path, text)]) == 4
    rep = json.loads(capsys.readouterr().out)
    assert rep["validation"]["passed"] is False
    assert rep["validation"]["ks_pvalue"] is None


def test_cli_detratio(tmp_path, capsys):
    text = MINIMAL.replace("n: 16", "n: [16, 32]") + "kramers:\n  source: 0\n  targets: [1]\n"
    assert main(["detratio", "--config", write(tmp_path, text)]) == 0
    rows = json.loads(capsys.readouterr().out)["detratio"]
    assert [r["n"] for r in rows] == [16, 32]
    assert rows[1]["abs_error"] < rows[0]["abs_error"]
    assert rows[0]["shooting_ratio"] == pytest.approx(-0.307488, abs=1e-6)
