"""Smoke test for the Python bindings.

Builds the extension with cargo unless RAPMF_EXTENSION points at a built
library, then exercises the main entry points on a small synthetic bundle.

    python3 python/smoke_test.py
"""

import importlib.util
import math
import os
import shutil
import subprocess
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def load_extension():
    lib = os.environ.get("RAPMF_EXTENSION")
    if lib is None:
        subprocess.run(
            ["cargo", "build", "--release", "-q", "-p", "rapmf-py"], cwd=ROOT, check=True
        )
        lib = ROOT / "target" / "release" / "librapmf_py.so"
    # the import machinery wants the file named after the module
    staging = Path(tempfile.mkdtemp())
    target = staging / "rapmf.abi3.so"
    shutil.copy(lib, target)
    spec = importlib.util.spec_from_file_location("rapmf", target)
    module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(module)
    return module


def main():
    rapmf = load_extension()
    print("loaded", rapmf.__version__)

    assert rapmf.map_rating(1) == 0.0 and rapmf.map_rating(5) == 1.0
    assert rapmf.unmap_rating(0.5) == 3.0
    assert abs(rapmf.relative_improvement(1.015, 0.9714) - 4.2956) < 1e-3

    t = rapmf.paired_t_test([1.2, 0.8, 1.1, 0.9, 1.0], [0.0] * 5)
    assert t["significant"] and abs(t["t_stat"] - math.sqrt(200)) < 1e-9

    errors = rapmf.gradcheck("rapmf-c")
    assert max(errors.values()) < 1e-4, errors

    config = rapmf.SyntheticConfig(n=80, m=60, p_inspect=0.5)
    bundle = rapmf.Bundle.generate(config, seed=1)
    train = bundle.train
    assert len(train) > 0 and train.n_users == 80
    assert 0.0 < bundle.observed_fraction() < 1.0

    hyper = rapmf.Hyperparams(eta=0.1, iterations=60, beta=0.3, lambda_uv=0.1, seed=1)
    pmf = rapmf.train(train, "pmf", hyper)
    model = rapmf.train(train, "rapmf-r", hyper)
    assert len(model.trace) == 60
    assert 1.0 <= model.predict(0, 0) <= 5.0
    scores = model.evaluate(bundle)
    assert set(scores) == set(rapmf.PROTOCOLS), scores
    print("pmf    ", {k: round(v, 4) for k, v in pmf.evaluate(bundle).items()})
    print("rapmf-r", {k: round(v, 4) for k, v in scores.items()})
    levels = model.response_levels()
    assert len(levels) == 5 and pmf.response_levels() is None

    with tempfile.TemporaryDirectory() as tmp:
        path = os.path.join(tmp, "model.json")
        model.save(path)
        again = rapmf.Model.load(path)
        assert again.predict(3, 4) == model.predict(3, 4)
        bundle.write(os.path.join(tmp, "bundle"))
        back = rapmf.Bundle.read(os.path.join(tmp, "bundle"))
        assert back.train.triplets() == train.triplets()

    try:
        rapmf.train(train, "rapmf-r", rapmf.Hyperparams(eta=50.0, beta=1.0, iterations=100))
    except rapmf.NumericalError as e:
        print("divergence reported:", e)
    else:
        raise AssertionError("expected divergence")

    tuned = rapmf.tune(bundle, "rapmf-r", rapmf.Hyperparams(eta=0.1, iterations=20),
                       lambda_uv=[0.1, 1.0], beta=[0.0, 0.1])
    assert tuned["response"]["model"] is not None
    print("tuned beta", tuned["response"]["hyper"].beta)
    print("smoke test passed")


if __name__ == "__main__":
    sys.exit(main())
