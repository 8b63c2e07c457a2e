"""Desk-scale solvability experiments.

Each probe solves a small family of boundary value problems and reports
measured ratios of boundary norms.  Nothing here decides "solvable or
not": a report carries the per-case ratios, their maximum and their
spread, and callers compare those against stability bounds.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .carleson import cm_norm
from .chgvar import ChangeOfVariable, conjugate
from .elliptic import (RTOL, FourierExtension, boundary_samples, laplace_fourier_oracle, solve_dirichlet,
                       solve_inhomogeneous)
from .errors import ConfigurationError, DegenerateInputError
from .fields import MatrixField, constant
from .io import to_plain
from .functionals import area_square, avg_ntmax, dual_witness, lp_norm, ntmax
from .mesh import HalfSpaceMesh, ball_kernel, periodic_correlate

__all__ = [
    "ProbeReport",
    "data_family",
    "dirichlet_probe",
    "regularity_probe",
    "perturbation_probe",
    "bilipschitz_stability_probe",
    "ibp_identity_probe",
    "ibp_terms",
    "ibp_bump_field",
    "moser_probe",
    "moser_constant",
    "poisson_duality_probe",
    "pipeline",
    "FREQUENCIES",
    "BUMP_CENTERS",
]

FREQUENCIES = (1, 2, 4, 8)
BUMP_CENTERS = (0.3, 0.7)
BUMP_RADIUS = 0.2
SPREAD_TOL = 1e-12  # ratios below this count as zero when forming the spread
ZERO_TOL = 1e-9  # gradients below this (relative to the data) are solver roundoff


@dataclass
class ProbeReport:
    """Per-case ratios of one probe run.

    ``cases`` is a list of dicts with keys ``case``, ``numerator``,
    ``denominator``, ``ratio`` (and optionally ``note``).  Skipped cases
    keep ``ratio = None``.
    """

    probe: str
    params: dict
    cases: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    environment: dict = field(default_factory=dict)

    def ratios(self):
        return np.array([c["ratio"] for c in self.cases if c.get("ratio") is not None], dtype=float)

    def finalize(self):
        r = self.ratios()
        if r.size:
            if not np.all(np.isfinite(r)):
                raise ConfigurationError(f"{self.probe}: non-finite ratio in the case table")
            lo = r.min()
            self.summary.setdefault("max_ratio", float(r.max()))
            self.summary.setdefault("min_ratio", float(lo))
            self.summary.setdefault("spread", float(r.max() / lo) if lo > SPREAD_TOL else None)
        else:
            self.summary.setdefault("max_ratio", None)
            self.summary.setdefault("min_ratio", None)
            self.summary.setdefault("spread", None)
        return self

    def case(self, case_id):
        for c in self.cases:
            if c["case"] == case_id:
                return c
        raise KeyError(case_id)

    def to_dict(self):
        return {"probe": self.probe, "params": to_plain(self.params), "cases": to_plain(self.cases),
                "summary": to_plain(self.summary), "environment": to_plain(self.environment)}


# boundary data ---------------------------------------------------------------

def _bump1(d):
    s = d / BUMP_RADIUS
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(np.abs(s) < 1, np.exp(1.0 - 1.0 / np.maximum(1.0 - s * s, 1e-300)), 0.0)


def data_family(family="all", n=2):
    """Named boundary data: ``[(case_id, f)]`` with ``f`` a function of boundary points.

    ``family`` is ``"trig"`` (``cos(2 pi k x_1)``, k in 1, 2, 4, 8), ``"bumps"``
    (two translated smooth bumps), ``"all"`` (both), ``"constant"`` or a
    list of such names / integer frequencies.
    """
    names = [family] if isinstance(family, (str, int, np.integer)) else list(family)
    out = []
    for name in names:
        if isinstance(name, (int, np.integer)):
            out.append(_trig(int(name), n))
        elif name == "trig":
            out.extend(_trig(k, n) for k in FREQUENCIES)
        elif name == "bumps":
            out.extend(_bump_data(c, n) for c in BUMP_CENTERS)
        elif name == "all":
            out.extend(_trig(k, n) for k in FREQUENCIES)
            out.extend(_bump_data(c, n) for c in BUMP_CENTERS)
        elif name == "constant":
            out.append(("const", lambda X: np.ones(np.shape(_first(X, n)))))
        else:
            raise ConfigurationError(f"unknown data family {name!r}")
    return out


def _first(X, n):
    X = np.asarray(X, dtype=float)
    return X if n == 2 else X[..., 0]


def _trig(k, n):
    return f"cos{k}", lambda X: np.cos(2 * np.pi * k * _first(X, n))


def _bump_data(c, n):
    def f(X):
        X = np.asarray(X, dtype=float)
        coords = [X] if n == 2 else [X[..., i] for i in range(n - 1)]
        val = 1.0
        for i, xi in enumerate(coords):
            ci = c if i == 0 else 0.5
            val = val * _bump1(np.mod(xi - ci + 0.5, 1.0) - 0.5)
        return val
    return f"bump{c:g}", f


def boundary_gradient(fb, mesh):
    """Spectral tangential gradient of boundary samples, shape ``col_shape + (n-1,)``."""
    fb = np.asarray(fb, dtype=float)
    F = np.fft.fftn(fb)
    N = mesh.N
    k = np.fft.fftfreq(N, 1.0 / N)
    if N % 2 == 0:
        k[N // 2] = 0.0  # the Nyquist mode has no real derivative
    comps = []
    for d in range(mesh.n - 1):
        shape = [1] * (mesh.n - 1)
        shape[d] = N
        comps.append(np.real(np.fft.ifftn(2j * np.pi * k.reshape(shape) * F)))
    return np.stack(comps, axis=-1)


def _as_mesh(J, n):
    return J if isinstance(J, HalfSpaceMesh) else HalfSpaceMesh(n, J)


def _run_cases(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


def _environment(seed=0, **extra):
    return {"seed": seed, "solver_rtol": RTOL, **extra}


# Dirichlet and regularity ---------------------------------------------------

def dirichlet_probe(A, p=2, family="all", J=6, workers=1):
    """Ratios ``||N(u_f)||_p / ||f||_p`` over a data family."""
    mesh = _as_mesh(J, A.n)
    data = data_family(family, A.n)

    def one(item):
        cid, f = item
        fb = boundary_samples(f, mesh)
        den = lp_norm(fb, p)
        if den == 0.0:
            return {"case": cid, "numerator": 0.0, "denominator": 0.0, "ratio": None, "note": "zero data"}
        sol = solve_dirichlet(A, f, mesh)
        num = lp_norm(ntmax(sol, mesh), p)
        return {"case": cid, "numerator": num, "denominator": den, "ratio": num / den}

    rep = ProbeReport("dirichlet", {"J": mesh.J, "n": mesh.n, "p": p, "field": A.name,
                                    "field_params": A.params, "family": family})
    rep.cases = _run_cases(one, data, workers)
    rep.environment = _environment()
    return rep.finalize()


def _regularity_case(A, mesh, p, cid, f):
    fb = boundary_samples(f, mesh)
    g = boundary_gradient(fb, mesh)
    den = lp_norm(np.sqrt(np.sum(g * g, axis=-1)), p)
    if den <= 1e-12 * max(1.0, float(np.abs(fb).max())):
        return {"case": cid, "numerator": 0.0, "denominator": 0.0, "ratio": None,
                "note": "constant data: zero boundary gradient"}
    sol = solve_dirichlet(A, f, mesh)
    num = lp_norm(avg_ntmax(sol.cell_gradients(), mesh), p)
    return {"case": cid, "numerator": num, "denominator": den, "ratio": num / den}


def regularity_probe(A, p=2, family="all", J=6, workers=1):
    """Ratios ``||N~(grad u_f)||_p / ||grad f||_p`` over a data family.

    Constant data has no gradient and is reported as skipped.
    """
    mesh = _as_mesh(J, A.n)
    data = data_family(family, A.n)
    rep = ProbeReport("regularity", {"J": mesh.J, "n": mesh.n, "p": p, "field": A.name,
                                     "field_params": A.params, "family": family})
    rep.cases = _run_cases(lambda it: _regularity_case(A, mesh, p, *it), data, workers)
    rep.environment = _environment()
    return rep.finalize()


# Carleson perturbation ------------------------------------------------------

def _sup_tgrad_sampled(A, samples=4096, seed=0):
    from .chgvar import sample_points

    x, t = sample_points(A.n, samples, seed)
    G = A.gradient(x, t)
    return float((t * np.sqrt(np.sum(G * G, axis=(-3, -2, -1)))).max())


def perturbation_probe(A0, C, p=2, J=6, family="all", workers=1):
    """Regularity ratios of ``A0`` and ``A0 + C`` side by side.

    Each case row holds the ratio for the perturbed operator (numerator),
    the unperturbed one (denominator) and their quotient, the inflation.
    """
    if not A0.has_gradient:
        raise ConfigurationError("the unperturbed field needs a gradient for the sup |t grad A0| check")
    mesh = _as_mesh(J, A0.n)
    sup_tgrad = _sup_tgrad_sampled(A0)
    x, t = mesh.cell_centers()
    cmag = np.sqrt(np.sum(np.asarray(C(x, t)) ** 2, axis=(-2, -1)))
    cm = cm_norm(cmag, mesh).norm
    A1 = A0 + C
    data = data_family(family, A0.n)

    def one(item):
        cid, f = item
        r0 = _regularity_case(A0, mesh, p, cid, f)
        r1 = _regularity_case(A1, mesh, p, cid, f)
        if r0["ratio"] is None:
            return {**r0, "note": r0.get("note")}
        return {"case": cid, "numerator": r1["ratio"], "denominator": r0["ratio"],
                "ratio": r1["ratio"] / r0["ratio"]}

    rep = ProbeReport("perturbation", {"J": mesh.J, "n": mesh.n, "p": p, "field": A0.name,
                                       "field_params": A0.params, "perturbation": C.name,
                                       "perturbation_params": C.params, "family": family})
    rep.cases = _run_cases(one, data, workers)
    rep.finalize()
    rep.summary.update({"inflation": rep.summary["max_ratio"], "cm_norm_C": cm, "sup_tgrad_A0": sup_tgrad,
                        "max_ratio_L0": max((c["denominator"] for c in rep.cases if c["ratio"] is not None),
                                            default=None),
                        "max_ratio_L1": max((c["numerator"] for c in rep.cases if c["ratio"] is not None),
                                            default=None)})
    rep.environment = _environment()
    return rep


# bi-Lipschitz stability -----------------------------------------------------

def _window_field(B, T):
    """Field whose flattening map is ``(x, s) -> rho_B(x, T s)``."""
    n = B.n

    def value(x, s):
        return T * B(x, T * s)

    grad = None
    if B.has_gradient:
        def grad(x, s):
            G = np.array(B.gradient(x, T * s), copy=True)
            G[..., : n - 1] *= T
            G[..., -1] *= T * T
            return G

    return MatrixField(n, value, grad, None, None, name=f"window({B.name},{T:g})")


def _top_height(rho, mesh, per_axis=64):
    xs = np.arange(per_axis) / per_axis
    X = np.stack(np.meshgrid(*([xs] * (mesh.n - 1)), indexing="ij"), -1).reshape(-1, mesh.n - 1)
    ts = np.linspace(0.0, 1.0, 33)[1:]
    P = np.repeat(X, ts.size, axis=0)
    T = np.tile(ts, X.shape[0])
    return float(rho(P, T)[1].max())


def bilipschitz_stability_probe(A, eps=None, J=6, family="all", B=None, reference="solve", p=2,
                                samples=2000, seed=0, workers=1):
    """Compare the pulled-back solve of ``L`` with the direct solve of ``L_rho``.

    The map is built from ``B``; by default from the smooth part of
    ``decompose(A, eps)`` when ``eps`` is given, and from ``A`` otherwise.

    ``reference="solve"`` solves ``L`` on the mesh, restricts to the window
    ``0 < t < T`` that ``rho`` maps into the strip and compares with a
    direct solve of the conjugated operator on that window (rescaled to
    the unit strip) with identical boundary values.  ``reference="oracle"``
    (``A = I``, n = 2) uses the half-plane harmonic extension composed with
    ``rho`` on the whole strip.

    Case rows: the regularity ratio of ``L_rho`` (numerator), of ``L``
    (denominator) and their quotient; each also records the ``L^2``
    difference between the two solutions.
    """
    mesh = _as_mesh(J, A.n)
    decomposition = None
    if B is None:
        if eps is not None:
            from .smoothing import decompose

            decomposition = decompose(A, eps)
            B = decomposition.B
        else:
            B = A
    rho = ChangeOfVariable(B, samples=samples, seed=seed)
    if reference not in ("solve", "oracle"):
        raise ConfigurationError("reference must be 'solve' or 'oracle'")
    if reference == "oracle":
        if mesh.n != 2 or not np.allclose(A(np.array([0.3]), np.array([0.4])), np.eye(2)):
            raise ConfigurationError("the oracle reference needs A = I in n = 2")
        T = 1.0
    else:
        T = 1.0 / max(1.0, _top_height(rho, mesh))
    wrho = ChangeOfVariable(_window_field(B, T), samples=samples, seed=seed)
    A_rho = conjugate(A, wrho)
    data = data_family(family, A.n)
    X, S = mesh.nodes()

    def pulled(u_eval):
        px, pt = wrho(X, S)
        return u_eval(px, pt)

    def one(item):
        cid, f = item
        if reference == "oracle":
            ext = FourierExtension(boundary_samples(f, mesh), "halfplane")
            w_ref = pulled(lambda a, b: ext(a[..., 0], b))
        else:
            u = solve_dirichlet(A, f, mesh)
            w_ref = pulled(lambda a, b: u.evaluate(a[..., 0] if mesh.n == 2 else a, b))
        top = w_ref[..., -1]
        w = solve_dirichlet(A_rho, f, mesh, top=top)
        diff = w.nodal - w_ref
        l2 = float(np.sqrt(np.mean(diff[..., 1:] ** 2)))
        r_rho = _regularity_case(A_rho, mesh, p, cid, f)
        r = _regularity_case(A, mesh, p, cid, f)
        row = {"case": cid, "l2_difference": l2}
        if r["ratio"] is None:
            return {**row, "numerator": 0.0, "denominator": 0.0, "ratio": None, "note": r["note"]}
        return {**row, "numerator": r_rho["ratio"], "denominator": r["ratio"], "ratio": r_rho["ratio"] / r["ratio"]}

    rep = ProbeReport("bilipschitz", {"J": mesh.J, "n": mesh.n, "p": p, "field": A.name,
                                      "field_params": A.params, "eps": eps, "map_field": B.name,
                                      "reference": reference, "family": family})
    rep.cases = _run_cases(one, data, workers)
    rep.finalize()
    rel = [abs(c["ratio"] - 1.0) for c in rep.cases if c["ratio"] is not None]
    rep.summary.update({"window": T, "bilipschitz": rho.bilipschitz,
                        "max_l2_difference": max(c["l2_difference"] for c in rep.cases),
                        "max_relative_ratio_difference": max(rel) if rel else None})
    if decomposition is not None:
        rep.summary["decomposition"] = decomposition.to_dict()
    rep.environment = _environment(seed, invertibility_samples=samples)
    return rep


# integration-by-parts identity ------------------------------------------------

def _bump_t(t, c, w):
    """Smooth bump in ``t`` centred at ``c`` with half-width ``w``; value and first two derivatives."""
    s = (t - c) / w
    inside = np.abs(s) < 1
    g = np.where(inside, 1.0 - s * s, 1.0)
    B = np.where(inside, np.exp(-1.0 / g), 0.0)
    B1 = -2 * s * B / g**2
    B2 = -2 * B / g**2 - 8 * s * s * B / g**3 + 4 * s * s * B / g**4
    return B, B1 / w, B2 / w**2


def ibp_bump_field(delta=0.3, n=2):
    """Smooth ``D`` with zero last row: ``delta (1 + cos(2 pi x_1)/2) exp(-t)`` in every tangential row."""
    P = np.zeros((n, n))
    P[: n - 1, :] = 1.0
    P[: n - 1, -1] = 0.5

    def value(x, t):
        s = delta * (1 + 0.5 * np.cos(2 * np.pi * x[..., 0])) * np.exp(-t)
        return s[..., None, None] * P

    def grad(x, t):
        e = np.exp(-t)
        out = np.zeros(t.shape + (n, n, n))
        out[..., 0] = (-delta * np.pi * np.sin(2 * np.pi * x[..., 0]) * e)[..., None, None] * P
        out[..., -1] = (-delta * (1 + 0.5 * np.cos(2 * np.pi * x[..., 0])) * e)[..., None, None] * P
        return out

    return MatrixField(n, value, grad, None, None, "ibp_bump", {"delta": delta})


def _test_functions(n):
    """``u~ = cos(2 pi x_1) b(t; 0.4, 0.25)``, ``v = sin(2 pi x_1 + 0.3) b(t; 0.5, 0.3)`` (n = 2)."""
    w = 2 * np.pi

    def u(x, t):
        c, s = np.cos(w * x[..., 0]), np.sin(w * x[..., 0])
        b, b1, b2 = _bump_t(t, 0.4, 0.25)
        return c * b, (-w * s * b, c * b1), ((-w * w * c * b, -w * s * b1), (-w * s * b1, c * b2))

    def v(x, t):
        c, s = np.cos(w * x[..., 0] + 0.3), np.sin(w * x[..., 0] + 0.3)
        b, b1, _ = _bump_t(t, 0.5, 0.3)
        return s * b, (w * c * b, s * b1)

    return u, v


def _nodal_derivative(a, h, axis, periodic):
    if periodic:
        return (np.roll(a, -1, axis=axis) - np.roll(a, 1, axis=axis)) / (2 * h)
    return np.gradient(a, h, axis=axis, edge_order=2)


def ibp_terms(D, J, pairs=None):
    """``T_ij`` and the four integrated-by-parts terms on the mesh of level ``J``.

    Functions are sampled at the nodes; every derivative is a second-order
    central difference of nodal samples and integrals use the trapezoid
    rule, so the identity holds up to ``O(h^2)``.

    Returns ``{(i, j): (T, (T1, T2, T3, T4))}`` with zero-based indices.
    """
    n = D.n if isinstance(D, MatrixField) else 2
    if n != 2:
        raise ConfigurationError("the identity probe is implemented for n = 2")
    mesh = HalfSpaceMesh(n, J)
    if pairs is None:
        pairs = [(i, j) for i in range(n - 1) for j in range(n)]
    for i, j in pairs:
        if not 0 <= i < n - 1 or not 0 <= j < n:
            raise ConfigurationError(f"pair ({i}, {j}) is not tangential: i must lie in [0, {n - 2}]")
    X, T = mesh.nodes()
    h = mesh.h
    if isinstance(D, MatrixField):
        Dv = np.asarray(D(X, T), dtype=float)
        if np.abs(Dv[..., -1, :]).max() > 0:
            raise ConfigurationError("D must have a vanishing last row")
    else:
        Dv = np.zeros(T.shape + (n, n))
    u, v = _test_functions(n)
    U = u(X, T)[0]
    V = v(X, T)[0]

    def d(a, k):
        return _nodal_derivative(a, h, 0 if k < n - 1 else 1, k < n - 1)

    du = [d(U, k) for k in range(n)]
    dv = [d(V, k) for k in range(n)]
    wt = np.full(T.shape[-1], h)
    wt[[0, -1]] *= 0.5

    def integral(a):
        return float(np.sum(a * wt) * h)

    out = {}
    for i, j in pairs:
        Dij = Dv[..., i, j]
        T0 = integral(Dij * du[j] * dv[i])
        T1 = -integral(d(Dij, n - 1) * du[j] * dv[i] * T)
        T2 = -integral(Dij * d(du[j], n - 1) * dv[i] * T)
        T3 = integral(d(Dij, i) * du[j] * dv[n - 1] * T)
        T4 = integral(Dij * d(du[j], i) * dv[n - 1] * T)
        out[(i, j)] = (T0, (T1, T2, T3, T4))
    return out


def ibp_identity_probe(D=None, Js=(4, 5, 6, 7), pairs=None):
    """Residual ``|T_ij - sum_k T^k_ij|`` per level, maximised over the pairs.

    Case rows: residual (numerator), ``max |T_ij|`` (denominator), their
    quotient.  The summary lists the reduction factor between successive
    levels.
    """
    D = ibp_bump_field() if D is None else D
    rep = ProbeReport("ibp_identity", {"Js": list(Js), "field": getattr(D, "name", "zero"),
                                       "field_params": getattr(D, "params", {}),
                                       "pairs": None if pairs is None else [list(p) for p in pairs]})
    res = []
    for J in Js:
        terms = ibp_terms(D, J, pairs)
        r = max(abs(T - sum(parts)) for T, parts in terms.values())
        scale = max(abs(T) for T, _ in terms.values())
        res.append(r)
        rep.cases.append({"case": f"J={J}", "numerator": r, "denominator": scale,
                          "ratio": r / scale if scale > 0 else None,
                          "terms": {f"{i},{j}": [T, *parts] for (i, j), (T, parts) in terms.items()}})
    rep.finalize()
    red = [a / b if b > 0 else None for a, b in zip(res[:-1], res[1:])]
    rep.summary.update({"residuals": res, "reduction": red})
    rep.environment = _environment()
    return rep


# Moser estimate -------------------------------------------------------------------

def moser_constant(grad, mesh, zero=0.0):
    """Per-cell Moser quotient on cells with ``3 t <= 1``.

    ``|g(x, r)|`` divided by the root of the ``dy``-average over
    ``B(x, r)`` of ``int_{r/3}^{3r} |g|^2 dt/t``, the ``dt/t`` integral
    normalised by ``ln 9`` so that a constant gradient gives exactly 1.
    Returns an array with ``nan`` where the cell is outside the range or
    the root of the denominator does not exceed ``zero``.
    """
    g2 = np.sum(np.asarray(grad, dtype=float) ** 2, axis=-1)
    out = np.full(mesh.cell_shape, np.nan)
    edges = mesh.tn
    for k, r in enumerate(mesh.tc):
        if 3 * r > 1.0:
            break
        lo = np.maximum(edges[:-1], r / 3)
        hi = np.minimum(edges[1:], 3 * r)
        w = np.where(hi > lo, np.log(np.where(hi > lo, hi, 1.0) / np.where(hi > lo, lo, 1.0)), 0.0)
        col = np.tensordot(g2, w, axes=([-1], [0])) / np.log(9.0)
        ker = ball_kernel(mesh.n - 1, mesh.N, mesh.h, r, "overlap", "cell")
        den = periodic_correlate(col, ker) / ker.sum()
        num = np.sqrt(g2[..., k])
        with np.errstate(invalid="ignore", divide="ignore"):
            ok = (den > 0) & (np.sqrt(np.maximum(den, 0.0)) > zero)
            out[..., k] = np.where(ok, num / np.sqrt(np.where(ok, den, 1.0)), np.nan)
    return out


def moser_probe(A, f, Js=(5, 6, 7)):
    """Empirical Moser constant of the Dirichlet solution, one case per level."""
    if A.has_gradient:
        sup_tgrad = _sup_tgrad_sampled(A)
    else:
        sup_tgrad = None
    Js = [Js] if isinstance(Js, (int, np.integer)) else list(Js)
    rep = ProbeReport("moser", {"Js": Js, "n": A.n, "field": A.name, "field_params": A.params})
    for J in Js:
        mesh = HalfSpaceMesh(A.n, J)
        sol = solve_dirichlet(A, f, mesh)
        scale = float(np.abs(boundary_samples(f, mesh)).max())
        q = moser_constant(sol.cell_gradients(), mesh, zero=ZERO_TOL * max(scale, 1e-300))
        if not np.any(np.isfinite(q)):
            rep.cases.append({"case": f"J={J}", "numerator": 0.0, "denominator": 0.0, "ratio": None,
                              "note": "zero gradient: all points skipped"})
            continue
        c = float(np.nanmax(q))
        rep.cases.append({"case": f"J={J}", "numerator": c, "denominator": 1.0, "ratio": c,
                          "points": int(np.isfinite(q).sum())})
    rep.finalize()
    rep.summary["sup_tgrad_A"] = sup_tgrad
    rep.environment = _environment()
    return rep


# Poisson duality -------------------------------------------------------------------

def _default_K(mesh):
    _, t = mesh.cell_centers()
    return (t > 2 * mesh.h) & (t < 0.5)


def poisson_duality_probe(A, q=2.0, Js=(5, 6, 7), f=None, comparison="oracle"):
    """Adjoint solve driven by the duality witness of ``F = grad(u_f - u~_f)``.

    ``u~_f`` is the strip Fourier extension (``comparison="oracle"``) or a
    finite element solve of the Laplacian (``"fem"``).  Per level the case
    row reports ``||S(v)||_q' + ||N(v)||_q'``; when ``F`` vanishes the
    witness and ``v`` are zero.  The summary also records the top-boundary
    contamination: the largest difference between the strip and half-plane
    extension gradients in the lower half of the strip.
    """
    if comparison not in ("oracle", "fem"):
        raise ConfigurationError("comparison must be 'oracle' or 'fem'")
    q = float(q)
    if not q > 1:
        raise ConfigurationError("q must exceed 1")
    qp = q / (q - 1)
    f = f if f is not None else (lambda X: np.cos(2 * np.pi * X))
    Js = [Js] if isinstance(Js, (int, np.integer)) else list(Js)
    rep = ProbeReport("poisson_duality", {"Js": Js, "q": q, "field": A.name, "field_params": A.params,
                                          "comparison": comparison})
    contamination = []
    for J in Js:
        mesh = HalfSpaceMesh(A.n, J)
        u = solve_dirichlet(A, f, mesh)
        if comparison == "oracle":
            ut = laplace_fourier_oracle(f, mesh, "strip")
        else:
            ut = solve_dirichlet(constant(n=A.n), f, mesh)
        gu = u.cell_gradients()
        F = gu - ut.cell_gradients()
        if np.abs(F).max() <= ZERO_TOL * max(float(np.abs(gu).max()), 1e-300):
            F = np.zeros_like(F)
        K = _default_K(mesh)
        try:
            wit = dual_witness(F, mesh, K, q)
            H, pairing, target = wit.h, wit.pairing, wit.target
        except DegenerateInputError:
            H, pairing, target = None, 0.0, 0.0
        if H is None or not np.any(H):
            S = Nv = 0.0
        else:
            v = solve_inhomogeneous(A, H, mesh, adjoint=True)
            S = lp_norm(area_square(v, mesh, "S"), qp)
            Nv = lp_norm(ntmax(v, mesh), qp)
        rep.cases.append({"case": f"J={J}", "numerator": S + Nv, "denominator": 1.0, "ratio": S + Nv,
                          "square": S, "ntmax": Nv, "pairing": pairing, "target": target})
        if mesh.n == 2:
            fb = boundary_samples(f, mesh)
            strip = FourierExtension(fb, "strip")
            half = FourierExtension(fb, "halfplane")
            x, t = mesh.cell_centers()
            low = t[..., 0] < 0.5
            gap = np.abs(strip.gradient(x[..., 0], t) - half.gradient(x[..., 0], t))
            contamination.append(float(gap[low].max()))
    rep.finalize()
    vals = [c["ratio"] for c in rep.cases]
    rep.summary["growth"] = [b / a if a > 0 else None for a, b in zip(vals[:-1], vals[1:])]
    rep.summary["top_contamination"] = contamination
    rep.environment = _environment(q_dual=qp)
    return rep


# end-to-end pipeline ---------------------------------------------------------------

def pipeline(A, eps=0.1, J=5, p=2, family="trig", B=None, samples=2000, seed=0):
    """Weak-DKP field -> decomposition -> conjugation -> structure check -> regularity.

    ``B`` overrides the smooth part used for the map (the decomposition is
    still computed and reported).  Returns a dict of the intermediate
    summaries and the final :class:`ProbeReport`.
    """
    from .chgvar import structure_check
    from .smoothing import decompose

    dec = decompose(A, eps, J=J)
    rho = ChangeOfVariable(dec.B if B is None else B, samples=samples, seed=seed)
    A_rho = conjugate(A, rho)
    mesh = HalfSpaceMesh(A.n, J)
    structure = structure_check(A_rho, mesh, include_blocks=False)
    report = regularity_probe(A_rho, p=p, family=family, J=J)
    return {"decomposition": dec.to_dict(), "rho": rho.summary(), "structure": structure, "report": report}
