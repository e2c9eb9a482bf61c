"""Compare the compiled kernels with the numpy fallback.

    python benchmarks/bench_kernels.py [--n 32 64] [--repeat 20] [--threads 1]

Times each hot kernel in isolation, then a full model step with the
process-wide backend swapped. Results are printed as a table.
"""

import argparse
import statistics
import timeit

import numpy as np

from adas import _kernels_py, kernels, models
from adas.models import Forcing, ModelSpec, State, step
from adas.spectral import Grid, random_divfree_field

try:
    from adas import _kernels as _compiled
except ImportError:
    _compiled = None


def _cplx(rng, shape):
    return np.ascontiguousarray(rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def kernel_cases(n, rng):
    g = Grid(n)
    sshape = (3,) + g.spectral_shape
    w = _cplx(rng, sshape)
    n0, n1 = _cplx(rng, sshape), _cplx(rng, sshape)
    decay = np.ascontiguousarray(np.exp(-g.k2 * 0.01))
    a = rng.standard_normal((3,) + g.physical_shape)
    gr = rng.standard_normal((3, 3) + g.physical_shape)
    out_p = np.empty_like(a)
    out_s = np.empty_like(w)
    return {
        "contract": lambda m: m.contract(a, gr, out_p),
        "contract_T_acc": lambda m: m.contract(a, gr, out_p, True, True),
        "project_dealias": lambda m: m.project_dealias(w.copy(), g.kx, g.ky, g.kz, g.inv_kd2, g.retained_mask),
        "if_euler": lambda m: m.if_euler(w, n0, decay, 0.01, out_s),
        "if_ab2": lambda m: m.if_ab2(w, n0, n1, decay, 0.01, out_s),
    }


def best(fn, repeat):
    times = timeit.repeat(fn, number=1, repeat=repeat)
    return min(times), statistics.median(times)


def swap_backend(mod):
    for name in ("contract", "project_dealias", "if_euler", "if_ab2"):
        setattr(kernels, name, getattr(mod, name))


def step_time(n, mod, repeat):
    swap_backend(mod)
    g = Grid(n)
    model = ModelSpec("NS-alpha", nu=0.05, alpha=0.2)
    f = Forcing(amplitude=0.1)
    s = step(model, State(random_divfree_field(g, 1.0, 4, 0)), f, 0.005)
    return best(lambda: step(model, s, f, 0.005), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args(argv)
    backends = [_kernels_py] + ([_compiled] if _compiled is not None else [])
    if _compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    else:
        _compiled.set_num_threads(args.threads)
    original = {name: getattr(kernels, name) for name in ("contract", "project_dealias", "if_euler", "if_ab2")}
    rng = np.random.default_rng(0)
    print(f"{'n':>4} {'case':<16}" + "".join(f"{b.NAME + ' ms':>14}" for b in backends) + f"{'speedup':>10}")
    for n in args.n:
        rows = [(name, [best(lambda: fn(b), args.repeat)[0] for b in backends])
                for name, fn in kernel_cases(n, rng).items()]
        rows.append(("full step", [step_time(n, b, max(3, args.repeat // 4))[0] for b in backends]))
        for name, t in rows:
            speed = f"{t[0] / t[-1]:>9.2f}x" if len(t) > 1 else ""
            print(f"{n:>4} {name:<16}" + "".join(f"{x * 1e3:>14.3f}" for x in t) + speed)
    for name, fn in original.items():
        setattr(kernels, name, fn)
    models._symbols.cache_clear()


if __name__ == "__main__":
    main()
