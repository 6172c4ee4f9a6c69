"""Smoke test for the onebit Python extension.

Run after `maturin develop -m crates/python/pyproject.toml`, or after
`cargo build --release -p onebit-py --features extension-module`, in which
case the shared library is loaded from target/release.
"""

import importlib.machinery
import importlib.util
import math
import pathlib
import sys
import tempfile


def load():
    try:
        import onebit

        return onebit
    except ImportError:
        pass
    root = pathlib.Path(__file__).resolve().parent.parent
    for profile in ("release", "debug"):
        for name in ("libonebit.so", "libonebit.dylib", "onebit.dll"):
            lib = root / "target" / profile / name
            if lib.exists():
                loader = importlib.machinery.ExtensionFileLoader("onebit", str(lib))
                spec = importlib.util.spec_from_file_location("onebit", str(lib), loader=loader)
                mod = importlib.util.module_from_spec(spec)
                loader.exec_module(mod)
                sys.modules["onebit"] = mod
                return mod
    sys.exit("onebit extension not found; build it first")


def main():
    ob = load()
    limit = 10 * math.log10(2 / math.pi)

    assert abs(ob.sine_integral(math.pi) - 1.851937051982466) < 1e-13
    assert abs(ob.bivariate_normal_cdf(0.0, 0.0, 0.5) - 1 / 3) < 1e-12
    assert ob.q_function(0.0) == 0.5

    cfg = ob.PilotConfig(31)
    assert cfg.chips == 31 and cfg.n_samples == 62
    theta = ob.ChannelParams.from_snr_db(0.0, 0.1 * cfg.chip_period)
    s, jac = ob.sample_signal(cfg, theta)
    assert len(s) == len(jac) == 62

    low = ob.bound_pair(cfg, ob.ChannelParams.from_snr_db(-40.0, 0.0))
    assert abs(low.chi_gamma_db - limit) < 0.1 and abs(low.chi_tau_db - limit) < 0.1, low

    with tempfile.TemporaryDirectory() as out:
        pts = ob.run_sweep([-24.0, 0.0], [1, 2, 3], cfg, output_dir=out)
        assert [(p.snr_db, p.kappa) for p in pts] == [(-24, 1), (-24, 2), (-24, 3), (0, 1), (0, 2), (0, 3)]
        assert all(p.error is None and p.chi_gamma_db <= 0 and p.chi_tau_db <= 0 for p in pts)
        assert (pathlib.Path(out) / "QLoss_SamplingRate_m24dB.txt").exists()
    loss = ob.equal_complexity_loss(pts)
    assert 0 < loss < 3, loss

    mc = ob.mc_moment_check(cfg.with_kappa(2), theta, 8, 20000, 1)
    assert mc["max_mean_score"] < 5 and mc["max_cov_score"] < 5, mc
    exact, bound, gap, holds = ob.exact_bound_check_n2(cfg.with_kappa(2), theta, 3, 1)
    assert holds, (exact, bound, gap)
    assert ob.jacobian_checks(cfg.with_kappa(2), theta) < 1e-5

    try:
        ob.PilotConfig(0)
    except ValueError:
        pass
    else:
        raise AssertionError("empty code accepted")

    print("python smoke test passed:", pts[-1])


if __name__ == "__main__":
    main()
