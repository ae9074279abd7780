import json

import numpy as np
import pytest

from thermoformal import cli
from thermoformal.errors import SchemaError


def job(command, **kw):
    base = {"schema_version": 1, "command": command}
    base.update(kw)
    return base


class TestValidation:
    def test_unknown_top_key(self):
        with pytest.raises(SchemaError) as exc:
            cli.validate(job("spectrum", bogus=1))
        assert "bogus" in str(exc.value)

    def test_unknown_param_key(self):
        with pytest.raises(SchemaError) as exc:
            cli.validate(job("spectrum", params={"m": 3}))
        assert "params.m" in str(exc.value)

    def test_bad_schema_version(self):
        with pytest.raises(SchemaError):
            cli.validate({"schema_version": 2, "command": "spectrum"})

    def test_bad_command(self):
        with pytest.raises(SchemaError):
            cli.validate(job("eigenstuff"))

    def test_defaults_materialized(self):
        resolved = cli.validate(job("spectrum"))
        assert resolved["params"] == {"scheme": "ulam", "n": 1024}
        assert resolved["map"]["name"] == "doubling"
        assert resolved["seed"] == 0

    def test_roundtrip_lossless(self):
        resolved = cli.validate(job("clt", seed=7, params={"n": 256, "samples": 1000}))
        again = cli.validate(resolved)
        assert again == resolved

    def test_gamma_range_checked(self):
        with pytest.raises(SchemaError):
            cli.validate(job("certify", params={"gamma": 1.5}))


class TestRun:
    def test_spectrum_doubling(self, tmp_path):
        code, summary = cli.run(job("spectrum", params={"n": 256}), tmp_path)
        assert code == cli.EXIT_OK
        assert summary["results"]["lambda"] == pytest.approx(2.0, abs=1e-10)
        assert summary["results"]["pressure"] == pytest.approx(np.log(2.0), abs=1e-10)
        assert (tmp_path / "summary.json").exists()
        rows = (tmp_path / "spectrum.csv").read_text().strip().split("\n")
        assert rows[0] == "x,h,nu,mu"
        assert len(rows) == 257

    def test_certify_pass_and_fail(self):
        code, summary = cli.run(job(
            "certify", map={"kind": "builtin", "name": "doubling"},
            params={"N": 1, "gamma": 0.6, "resolution": 64}))
        assert code == cli.EXIT_OK and summary["results"]["passed"]

        code, summary = cli.run(job(
            "certify", map={"kind": "builtin", "name": "rotation"},
            params={"N": 2, "gamma": 0.9, "resolution": 64}))
        assert code == cli.EXIT_CERTIFY_FAIL and not summary["results"]["passed"]

    def test_certify_uncertified_mode(self):
        # Hölder-only lift: no modulus available, center-value mode
        code, summary = cli.run(job(
            "certify",
            map={"kind": "piecewise_poly", "name": "poly2", "degree": 2,
                 "params": {"breakpoints": [0.0, 1.0], "coefficients": [[0.0, 2.0]],
                            "smoothness": "holder"}},
            params={"N": 1, "gamma": 0.6, "resolution": 32}))
        assert summary["results"]["mode"] == "center_only"
        assert code == cli.EXIT_UNCERTIFIED

    def test_clt_coboundary_refusal_reported(self):
        cfg = job("clt",
                  observable={"kind": "coboundary",
                              "params": {"u": {"kind": "fourier_cos",
                                               "params": {"k": 1, "amplitude": 1.0}}}},
                  params={"n": 4096, "samples": 1000, "orbit_n": 10})
        code, summary = cli.run(cfg)
        assert code == cli.EXIT_OK
        assert summary["results"]["coboundary"]
        assert summary["results"]["ks_statistic"] is None

    def test_correlations_csv(self, tmp_path):
        code, summary = cli.run(job("correlations", params={"n": 256, "n_max": 6}), tmp_path)
        assert code == cli.EXIT_OK
        lines = (tmp_path / "correlations.csv").read_text().strip().split("\n")
        assert lines[0] == "lag,C"
        assert len(lines) == 8
        c0 = float(lines[1].split(",")[1])
        assert c0 == pytest.approx(0.5, abs=1e-10)


class TestReproducibility:
    @pytest.mark.parametrize("cfg", [
        job("spectrum", params={"n": 128, "scheme": "collocation"}),
        job("clt", seed=3, params={"n": 256, "samples": 4000, "orbit_n": 25}),
        job("free-energy", seed=1, params={"n": 128, "steps": 9, "t_max": 0.3,
                                           "mc_t_values": [0.2], "mc_samples": 2000}),
        job("ldp", seed=5, params={"n": 128, "steps": 21, "t_max": 1.5,
                                   "a": 0.3, "b": 0.5, "n_list": [10, 20],
                                   "samples": 5000, "s_steps": 51}),
    ])
    def test_rerun_from_echoed_config_bitwise(self, cfg):
        code1, s1 = cli.run(cfg)
        code2, s2 = cli.run(s1["resolved_config"])
        assert code1 == code2
        assert cli.dumps_summary(s1) == cli.dumps_summary(s2)

    def test_csv_bitwise(self, tmp_path):
        cfg = job("rate-function", params={"n": 128, "steps": 21, "t_max": 0.5,
                                           "s_steps": 31})
        cli.run(cfg, tmp_path / "a")
        cli.run(cfg, tmp_path / "b")
        fa = (tmp_path / "a" / "rate_function.csv").read_text()
        fb = (tmp_path / "b" / "rate_function.csv").read_text()
        assert fa == fb


class TestMain:
    def test_end_to_end(self, tmp_path, capsys):
        cfg_path = tmp_path / "job.json"
        cfg_path.write_text(json.dumps(job("spectrum", params={"n": 128})))
        code = cli.main(["spectrum", "--config", str(cfg_path),
                         "--out", str(tmp_path / "artifacts")])
        assert code == 0
        out = capsys.readouterr().out
        parsed = json.loads(out)
        assert parsed["results"]["lambda"] == pytest.approx(2.0, abs=1e-10)
        assert (tmp_path / "artifacts" / "summary.json").exists()

    def test_command_mismatch(self, tmp_path, capsys):
        cfg_path = tmp_path / "job.json"
        cfg_path.write_text(json.dumps(job("spectrum")))
        code = cli.main(["certify", "--config", str(cfg_path)])
        assert code == cli.EXIT_SCHEMA

    def test_missing_config(self, capsys):
        code = cli.main(["spectrum", "--config", "/nonexistent/job.json"])
        assert code == cli.EXIT_SCHEMA

    def test_schema_violation_exit(self, tmp_path, capsys):
        cfg_path = tmp_path / "job.json"
        cfg_path.write_text(json.dumps(job("spectrum", params={"n": "large"})))
        code = cli.main(["spectrum", "--config", str(cfg_path)])
        assert code == cli.EXIT_SCHEMA

    def test_response_command(self, tmp_path, capsys):
        cfg_path = tmp_path / "job.json"
        cfg_path.write_text(json.dumps(job(
            "response",
            map={"kind": "builtin", "name": "derived_expanding"},
            potential={"kind": "fourier_cos", "params": {"k": 1, "amplitude": 0.1}},
            params={"n": 64, "v_count": 5, "guard_resolution": 512})))
        code = cli.main(["response", "--config", str(cfg_path),
                         "--out", str(tmp_path / "art")])
        assert code == 0
        lines = (tmp_path / "art" / "response.csv").read_text().strip().split("\n")
        assert lines[0] == "v,lambda,pressure,mean_obs,dlambda"
        assert len(lines) == 6
