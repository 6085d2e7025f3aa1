import json
import subprocess
import sys

import pytest

from sfqnn.cli import main


@pytest.fixture(scope="module")
def xor_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("xor")
    assert main(["train-xor", "--out", str(out)]) == 0
    return out


def test_characterize_synapse(tmp_path):
    assert main(["characterize-synapse", "--out", str(tmp_path), "--points", "5", "--pulses", "200"]) == 0
    lines = (tmp_path / "synapse.csv").read_text().splitlines()
    assert lines[0] == "i_b_ua,p_emp,p_model" and len(lines) == 6
    doc = json.loads((tmp_path / "characterize-synapse.manifest.json").read_text())
    assert doc["subcommand"] == "characterize-synapse" and doc["seed"] == 1
    assert doc["outputs"] == [str(tmp_path / "synapse.csv")]


def test_characterize_neuron_and_fit(tmp_path):
    assert main(["characterize-neuron", "--out", str(tmp_path), "--points", "12", "--duration-ps", "4000"]) == 0
    csv = tmp_path / "neuron.csv"
    assert csv.read_text().startswith("r_in_norm,r_out_norm\n0.0,0.0\n")
    assert main(["fit-activation", str(csv), "--out", str(tmp_path)]) == 0
    text = (tmp_path / "activation.txt").read_text()
    assert [line.split("=")[0] for line in text.splitlines()] == ["r_sat", "r_thr", "gain", "beta"]
    doc = json.loads((tmp_path / "fit-activation.manifest.json").read_text())
    assert doc["inputs"] == [str(csv)]


def test_train_xor_outputs(xor_dir):
    for name in ("xor_neuron.csv", "xor_activation.txt", "xor_model.txt", "loss.csv", "xor.net",
                 "train-xor.manifest.json"):
        assert (xor_dir / name).exists(), name
    doc = json.loads((xor_dir / "train-xor.manifest.json").read_text())
    assert doc["parameters"]["final_loss"] < 0.01
    assert (xor_dir / "loss.csv").read_text().startswith("epoch,loss\n0,")


def test_train_xor_missing_loss_target_is_domain_error(tmp_path):
    assert main(["train-xor", "--out", str(tmp_path), "--epochs", "1", "--max-loss", "1e-9"]) == 1


def test_simulate_and_energy(xor_dir, tmp_path):
    code = main(["simulate", str(xor_dir / "xor.net"), "--out", str(tmp_path),
                 "--input", "in0=1.8", "--trace", "--pulses"])
    assert code == 0
    rates = (tmp_path / "rates.csv").read_text().splitlines()
    assert rates[0] == "probe,rate_ghz" and rates[1].startswith("out0,")
    assert float(rates[1].split(",")[1]) / 33.3 >= 1.0
    energy = (tmp_path / "energy.csv").read_text().splitlines()
    assert energy[0] == "node,switches,energy_j" and energy[-1].startswith("total,")
    assert (tmp_path / "trace_n3_0.csv").read_text().startswith("t_ps,state\n")
    assert (tmp_path / "pulses_out0.csv").read_text().startswith("t_ps\n")


def test_lower_round_trip(xor_dir, tmp_path):
    assert main(["lower", str(xor_dir / "xor_model.txt"), "--out", str(tmp_path), "--inputs", "0.2,0.2"]) == 0
    assert (tmp_path / "network.net").read_text() == (xor_dir / "xor.net").read_text()


def test_lower_wrong_input_count(xor_dir, tmp_path):
    assert main(["lower", str(xor_dir / "xor_model.txt"), "--out", str(tmp_path), "--inputs", "0.2"]) == 2


def test_phase_diagram_and_rerun(xor_dir, tmp_path):
    out = tmp_path / "phase"
    assert main(["phase-diagram", str(xor_dir / "xor.net"), "--out", str(out), "--points", "5",
                 "--duration-ps", "4000"]) == 0
    first = (out / "phase.csv").read_text()
    assert first.splitlines()[0] == "r_a_norm,r_b_norm,r_out_norm" and len(first.splitlines()) == 26
    assert main(["rerun", str(out / "phase-diagram.manifest.json")]) == 0
    assert (out / "phase.csv").read_text() == first


def test_missing_file_is_io_error(tmp_path):
    out = tmp_path / "never"
    assert main(["simulate", str(tmp_path / "absent.net"), "--out", str(out)]) == 2
    assert not out.exists()
    assert main(["fit-activation", str(tmp_path / "absent.csv"), "--out", str(out)]) == 2


def test_invalid_netlist_is_domain_error(tmp_path):
    bad = tmp_path / "bad.net"
    bad.write_text("node source a rate=10GHz\nnode probe p\nnode probe q\nedge a p\nedge a q\n")
    assert main(["simulate", str(bad), "--out", str(tmp_path)]) == 1
    bad.write_text("node source a rate=10\n")
    assert main(["simulate", str(bad), "--out", str(tmp_path)]) == 1


def test_unknown_source_override_is_domain_error(tmp_path):
    net = tmp_path / "n.net"
    net.write_text("node source a rate=10GHz\nnode probe p\nedge a p\n")
    assert main(["simulate", str(net), "--out", str(tmp_path), "--rate", "zz=3"]) == 1


@pytest.mark.parametrize("argv", [
    [],
    ["no-such-command"],
    ["simulate"],
    ["simulate", "x.net", "--rate", "oops"],
    ["characterize-synapse", "--points", "1"],
    ["characterize-neuron", "--seed", "abc"],
    ["rerun", "/nonexistent/manifest.json"],
])
def test_usage_errors(argv, tmp_path, capsys):
    if argv and argv[0] == "characterize-synapse":
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == 2


def test_help_exits_zero(capsys):
    assert main(["--help"]) == 0
    assert "phase-diagram" in capsys.readouterr().out


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "sfqnn", "characterize-synapse", "--out", str(tmp_path),
                           "--points", "3", "--pulses", "50"], capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "synapse.csv").exists()


def test_train_xor_is_deterministic(xor_dir, tmp_path):
    assert main(["train-xor", "--out", str(tmp_path)]) == 0
    for name in ("xor_neuron.csv", "xor_model.txt", "loss.csv", "xor.net"):
        assert (tmp_path / name).read_bytes() == (xor_dir / name).read_bytes()
