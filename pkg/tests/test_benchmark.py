import importlib.util
from pathlib import Path


def test_benchmark_script_runs(capsys):
    path = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_engine.py"
    spec = importlib.util.spec_from_file_location("bench_engine", path)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)
    mod.main(["--duration-ms", "400", "--sizes", "8", "--repeat", "1"])
    rows = capsys.readouterr().out.strip().splitlines()
    assert rows[-1].split()[-1] == "True"
