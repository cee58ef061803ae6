import yaml
from typer.testing import CliRunner

from cli import app
from services.flow_service import VerificationReport
from services.report_service import read_report
from tests.conftest import ARCH_DIR, BENCH_DIR, MANIFEST

runner = CliRunner()


def write_experiment(tmp_path, arch_text: str) -> str:
    arch = tmp_path / "arch.yaml"
    arch.write_text(arch_text)
    experiment = tmp_path / "experiment.yaml"
    experiment.write_text(yaml.safe_dump({
        "name": "cli", "base_arch": str(arch), "manifest": str(MANIFEST), "connection_types": ["None2D"],
        "benchmarks": ["and2", "or3"], "seeds": [1], "record_timing": False,
    }))
    return str(experiment)


def test_space_count_prints_the_full_design_space():
    result = runner.invoke(app, ["space", "count", "--type", "CB", "--type", "CBO", "--type", "SB",
                                 "--type", "Hybrid", "--type", "HybridO"])

    assert result.exit_code == 0, result.output
    assert "1,729,440,302" in result.output


def test_arch_validate_accepts_a_bundled_document():
    result = runner.invoke(app, ["arch", "validate", str(ARCH_DIR / "2d_4x4.yaml")])

    assert result.exit_code == 0, result.output
    assert "valid" in result.output


def test_arch_validate_rejects_vertical_links_on_one_layer(tmp_path, make_arch_text):
    path = tmp_path / "bad.yaml"
    path.write_text(make_arch_text(layers=1, connection_type="CB"))

    result = runner.invoke(app, ["arch", "validate", str(path)])

    assert result.exit_code == 1
    assert "error" in result.output


def test_rrg_build_output_can_be_dumped(tmp_path):
    target = tmp_path / "fabric.rrg"

    built = runner.invoke(app, ["rrg", "build", str(ARCH_DIR / "sb_2layer_4x4.yaml"), "--out", str(target)])
    dumped = runner.invoke(app, ["rrg", "dump", str(target)])

    assert built.exit_code == 0, built.output
    assert dumped.exit_code == 0, dumped.output
    assert target.is_file()
    assert "CHANZ" in dumped.output


def test_sweep_exits_1_when_a_flow_fails(tmp_path, make_arch_text):
    # or3 needs a 3-input LUT and cannot be packed into LUT2s
    experiment = write_experiment(tmp_path, make_arch_text(lut_size=2))
    output_dir = tmp_path / "out"

    result = runner.invoke(app, ["sweep", "run", experiment, "--jobs", "1", "--output-dir", str(output_dir)])

    assert result.exit_code == 1
    assert (output_dir / "report.csv").is_file()


def test_sweep_allow_failures_exits_0(tmp_path, make_arch_text):
    experiment = write_experiment(tmp_path, make_arch_text(lut_size=2))
    output_dir = tmp_path / "out"

    result = runner.invoke(app, ["sweep", "run", experiment, "--jobs", "1", "--output-dir", str(output_dir),
                                 "--allow-failures"])

    assert result.exit_code == 0, result.output
    rows = read_report(output_dir / "report.csv")
    assert {row.benchmark: row.status for row in rows} == {"and2": "ok", "or3": "failed"}


def test_flow_run_verifies_the_bitstream(tmp_path):
    result = runner.invoke(app, ["flow", "run", str(ARCH_DIR / "2d_4x4.yaml"), str(BENCH_DIR / "and2.blif"),
                                 "--verify", "--vectors", "20", "--out-dir", str(tmp_path)])

    assert result.exit_code == 0, result.output
    assert "PASS" in result.output


def test_flow_run_exits_1_on_a_verification_mismatch(tmp_path, monkeypatch):
    def mismatching(spec, netlist, seed, vectors):
        return VerificationReport("and2", vectors, mismatches=[(0, (1,), (0,))])

    monkeypatch.setattr("services.flow_service.verify_roundtrip", mismatching)

    result = runner.invoke(app, ["flow", "run", str(ARCH_DIR / "2d_4x4.yaml"), str(BENCH_DIR / "and2.blif"),
                                 "--verify", "--out-dir", str(tmp_path)])

    assert result.exit_code == 1
    assert "FAIL" in result.output
