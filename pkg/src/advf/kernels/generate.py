"""Generators for the shipped IR kernels.

``python -m advf.kernels.generate`` rewrites the files under ``data/``; the
test-suite checks the shipped files match these generators.
"""

from __future__ import annotations

from pathlib import Path
from typing import Callable, Optional, Sequence

DATA = Path(__file__).with_name("data")


def _f(x: float) -> str:
    r = repr(float(x))
    return r if ("." in r or "e" in r or "n" in r) else r + ".0"


class Emitter:
    """Accumulates IR text; tracks the current block for structured loops."""

    def __init__(self):
        self.header: list[str] = []
        self.lines: list[str] = []
        self.cur: Optional[str] = None

    def input(self, name: str, ty: str, values: Sequence):
        vals = " ".join(_f(v) if ty == "f64" else str(int(v)) for v in values)
        self.header.append(f"input {name} {ty}[{len(values)}] = {vals}")

    def block(self, label: str):
        self.lines.append(f"{label}:")
        self.cur = label

    def __call__(self, text: str, label: Optional[str] = None):
        self.lines.append("  " + text + (f' !label "{label}"' if label else ""))

    def loop(self, name: str, lo, hi, body: Callable, carry: Sequence = (),
             cond: Optional[Callable] = None):
        """for (%name = lo; %name < hi [&& cond]; ++) body(e, %name, carried).

        ``carry`` is a list of (reg, type, init); ``body`` returns the updated
        register for each; after the loop ``%reg`` holds the final value.
        ``cond(e, carried)`` may emit an extra i1 continuation test.
        """
        head, bodyl, latch, exit_ = (f"{name}_head", f"{name}_body", f"{name}_latch",
                                     f"{name}_exit")
        pred = self.cur
        self(f"br %{head}")
        self.block(head)
        self(f"%{name} = phi i64 [{lo}, %{pred}], [%{name}_n, %{latch}]")
        slots = []
        for reg, ty, init in carry:
            slots.append(len(self.lines))
            self(f"%{reg} = phi {ty} [{init}, %{pred}], [@, %{latch}]")
        carried = [f"%{r}" for r, _, _ in carry]
        self(f"%{name}_c0 = icmp slt i64 %{name}, {hi}")
        test = f"%{name}_c0"
        if cond is not None:
            extra = cond(self, carried)
            self(f"%{name}_c = and i1 {test}, {extra}")
            test = f"%{name}_c"
        self(f"condbr {test}, %{bodyl}, %{exit_}")
        self.block(bodyl)
        upd = body(self, f"%{name}", carried) or []
        for k, u in zip(slots, upd):
            self.lines[k] = self.lines[k].replace("@", u)
        self(f"br %{latch}")
        self.block(latch)
        self(f"%{name}_n = add i64 %{name}, 1")
        self(f"br %{head}")
        self.block(exit_)

    def text(self, comment: str) -> str:
        return "".join(f"; {l}\n" for l in comment.splitlines()) + "\n".join(
            self.header + self.lines) + "\n"


# ---------------------------------------------------------------------------
# l2norm


def l2norm(nz0: int = 3, jst: int = 1, jend: int = 2, ist: int = 1, iend: int = 2,
           nx0: int = 3, ny0: int = 3, ldx: int = 3, ldy: int = 3) -> str:
    lx, ly = ldx // 2 * 2 + 1, ldy // 2 * 2 + 1
    nv = nz0 * ly * lx * 5
    vals = [((7 * t) % 11 + 1) * 0.25 for t in range(nv)]
    e = Emitter()
    e.input("v", "f64", vals)
    e.block("entry")
    e(f"%v = alloc f64 x{nv}")
    e("%sum = alloc f64 x5")

    def stmt_a(e, m, _):
        e(f"%pa = gep f64 %sum, {m}")
        e("store f64 %pa, 0.0", "A")
    e.loop("ma", 0, 5, stmt_a)

    def k_body(e, k, _):
        def j_body(e, j, _):
            def i_body(e, i, _):
                def m_body(e, m, _):
                    e(f"%kj = mul i64 {k}, {ly}")
                    e(f"%kj2 = add i64 %kj, {j}")
                    e(f"%kji = mul i64 %kj2, {lx}")
                    e(f"%kji2 = add i64 %kji, {i}")
                    e("%vb = mul i64 %kji2, 5")
                    e(f"%vi = add i64 %vb, {m}")
                    e("%pv = gep f64 %v, %vi")
                    e("%x = load f64 %pv", "B")
                    e("%xx = fmul f64 %x, %x", "B")
                    e(f"%ps = gep f64 %sum, {m}")
                    e("%s = load f64 %ps", "B")
                    e("%s2 = fadd f64 %s, %xx", "B")
                    e("store f64 %ps, %s2", "B")
                e.loop("m", 0, 5, m_body)
            e.loop("i", ist, iend, i_body)
        e.loop("j", jst, jend, j_body)
    e.loop("k", 1, nz0 - 1, k_body)

    div = float((nx0 - 2) * (ny0 - 2) * (nz0 - 2))

    def stmt_c(e, m, _):
        e(f"%pc = gep f64 %sum, {m}")
        e("%sc = load f64 %pc", "C")
        e(f"%q = fdiv f64 %sc, {_f(div)}", "C")
        e("%r = call f64 sqrt %q", "C")
        e("store f64 %pc, %r", "C")
    e.loop("mc", 0, 5, stmt_c)

    def out(e, m, _):
        e(f"%po = gep f64 %sum, {m}")
        e("%so = load f64 %po")
        e('call f64 print %so, "sum"')
    e.loop("mo", 0, 5, out)
    e("ret")
    return e.text(f"l2norm: squared-norm accumulation over v into sum[5]\n"
                  f"nz0={nz0} jst={jst} jend={jend} ist={ist} iend={iend} nx0={nx0} ny0={ny0}")


# ---------------------------------------------------------------------------
# matrix multiply (int64, C accumulated in memory)


def _matrices(n: int):
    A = [[(i * n + j) % 5 + 1 for j in range(n)] for i in range(n)]
    B = [[(3 * i + 2 * j) % 7 + 1 for j in range(n)] for i in range(n)]
    return A, B


def _multiply(e: Emitter, a: str, b: str, c: str, P: int, Q: int, R: int):
    def i_body(e, i, _):
        def j_body(e, j, _):
            e(f"%ir = mul i64 {i}, {R}")
            e(f"%cij = add i64 %ir, {j}")
            e(f"%pc = gep i64 %{c}, %cij")
            e("store i64 %pc, 0", "init")

            def k_body(e, k, _):
                e(f"%iq = mul i64 {i}, {Q}")
                e(f"%aik = add i64 %iq, {k}")
                e(f"%pa = gep i64 %{a}, %aik")
                e("%av = load i64 %pa")
                e(f"%kr = mul i64 {k}, {R}")
                e(f"%bkj = add i64 %kr, {j}")
                e(f"%pb = gep i64 %{b}, %bkj")
                e("%bv = load i64 %pb")
                e("%prod = mul i64 %av, %bv")
                e("%cv = load i64 %pc", "mac")
                e("%cs = add i64 %cv, %prod", "mac")
                e("store i64 %pc, %cs", "mac")
            e.loop("k", 0, Q, k_body)
        e.loop("j", 0, R, j_body)
    e.loop("i", 0, P, i_body)


def _print_matrix(e: Emitter, c: str, rows: int, cols: int, stride: int):
    def i_body(e, i, _):
        def j_body(e, j, _):
            e(f"%orow = mul i64 {i}, {stride}")
            e(f"%oij = add i64 %orow, {j}")
            e(f"%po = gep i64 %{c}, %oij")
            e("%co = load i64 %po", "out")
            e('call i64 print %co, "C"', "out")
        e.loop("oj", 0, cols, j_body)
    e.loop("oi", 0, rows, i_body)


def mmul(n: int = 2) -> str:
    A, B = _matrices(n)
    e = Emitter()
    e.input("A", "i64", [x for row in A for x in row])
    e.input("B", "i64", [x for row in B for x in row])
    e.block("entry")
    e(f"%A = alloc i64 x{n * n}")
    e(f"%B = alloc i64 x{n * n}")
    e(f"%C = alloc i64 x{n * n}")
    _multiply(e, "A", "B", "C", n, n, n)
    _print_matrix(e, "C", n, n, n)
    e("ret")
    return e.text(f"mmul: C = A*B, {n}x{n} int64")


def abft_mmul(n: int = 2) -> str:
    """Checksum-encoded multiply: C^f = A^r B^c, then branch-free
    single-error correction of the interior and re-encoding of the margins."""
    A, B = _matrices(n)
    P = R = n + 1
    e = Emitter()
    e.input("A", "i64", [x for row in A for x in row])
    e.input("B", "i64", [x for row in B for x in row])
    e.block("entry")
    e(f"%A = alloc i64 x{n * n}")
    e(f"%B = alloc i64 x{n * n}")
    e(f"%Ar = alloc i64 x{P * n}")
    e(f"%Bc = alloc i64 x{n * R}")
    e(f"%C = alloc i64 x{P * R}")
    # encode: A^r = [A; e^T A], B^c = [B, B e]
    for j in range(n):
        for i in range(n):
            e(f"%ea{i}_{j} = load i64 %A[{i * n + j}]", "encode")
            e(f"store i64 %Ar[{i * n + j}], %ea{i}_{j}", "encode")
        acc = f"%ea0_{j}"
        for i in range(1, n):
            e(f"%sa{i}_{j} = add i64 {acc}, %ea{i}_{j}", "encode")
            acc = f"%sa{i}_{j}"
        e(f"store i64 %Ar[{n * n + j}], {acc}", "encode")
    for i in range(n):
        for j in range(n):
            e(f"%eb{i}_{j} = load i64 %B[{i * n + j}]", "encode")
            e(f"store i64 %Bc[{i * R + j}], %eb{i}_{j}", "encode")
        acc = f"%eb{i}_0"
        for j in range(1, n):
            e(f"%sb{i}_{j} = add i64 {acc}, %eb{i}_{j}", "encode")
            acc = f"%sb{i}_{j}"
        e(f"store i64 %Bc[{i * R + n}], {acc}", "encode")
    _multiply(e, "Ar", "Bc", "C", P, n, R)
    # verify: row/column discrepancies of the interior against the margins
    L = "verify"
    for i in range(P):
        for j in range(R):
            if i == n and j == n:
                continue
            e(f"%c{i}_{j} = load i64 %C[{i * R + j}]", L)

    def total(prefix: str, terms: list[str]) -> str:
        acc = terms[0]
        for k, t in enumerate(terms[1:], 1):
            e(f"{prefix}_{k} = add i64 {acc}, {t}", L)
            acc = f"{prefix}_{k}"
        return acc

    for i in range(n):
        rs = total(f"%rs{i}", [f"%c{i}_{j}" for j in range(n)])
        e(f"%dr{i} = sub i64 %c{i}_{n}, {rs}", L)
    for j in range(n):
        cs = total(f"%cs{j}", [f"%c{i}_{j}" for i in range(n)])
        e(f"%dc{j} = sub i64 %c{n}_{j}, {cs}", L)
        e(f"%nz{j} = icmp ne i64 %dc{j}, 0", L)
        e(f"%ind{j} = zext i1 %nz{j} to i64", L)
    for i in range(n):
        for j in range(n):
            e(f"%t{i}_{j} = mul i64 %dr{i}, %ind{j}", L)
            e(f"%n{i}_{j} = add i64 %c{i}_{j}, %t{i}_{j}", L)
    # re-encode margins from the corrected interior
    ro = [total(f"%ro{i}", [f"%n{i}_{j}" for j in range(n)]) for i in range(n)]
    co = [total(f"%co{j}", [f"%n{i}_{j}" for i in range(n)]) for j in range(n)]
    corner = total("%cor", ro)
    L = "correct"
    for i in range(n):
        for j in range(n):
            e(f"store i64 %C[{i * R + j}], %n{i}_{j}", L)
    for i in range(n):
        e(f"store i64 %C[{i * R + n}], {ro[i]}", L)
    for j in range(n):
        e(f"store i64 %C[{n * R + j}], {co[j]}", L)
    e(f"store i64 %C[{n * R + n}], {corner}", L)
    _print_matrix(e, "C", n, n, R)
    e("ret")
    return e.text(f"abft_mmul: checksum-encoded {n}x{n} int64 multiply with\n"
                  "branch-free single-error correction (C is the full encoded matrix)")


# ---------------------------------------------------------------------------
# cg_lite


def laplacian_2d(g: int = 4):
    """CSR of the 5-point Laplacian on a g x g grid (n = g*g)."""
    rowptr, cols, vals = [0], [], []
    for r in range(g):
        for c in range(g):
            row = []
            for dr, dc, v in ((-1, 0, -1.0), (0, -1, -1.0), (0, 0, 4.0), (0, 1, -1.0), (1, 0, -1.0)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < g and 0 <= cc < g:
                    row.append((rr * g + cc, v))
            for col, v in row:
                cols.append(col)
                vals.append(v)
            rowptr.append(len(cols))
    return rowptr, cols, vals


CG_STOP = 1e-10
CG_TAU = 1e-8
CG_MAXIT = 40


def cg_rhs(n: int) -> list[float]:
    return [float((7 * i) % 5 + 1) for i in range(n)]


def cg_lite(g: int = 4, maxit: int = CG_MAXIT, stop: float = CG_STOP) -> str:
    rowptr, cols, vals = laplacian_2d(g)
    n = g * g
    nnz = len(cols)
    e = Emitter()
    e.input("rowptr", "i32", rowptr)
    e.input("colidx_like", "i32", cols)
    e.input("vals", "f64", vals)
    e.input("b", "f64", cg_rhs(n))
    e.block("entry")
    e(f"%rowptr = alloc i32 x{n + 1}")
    e(f"%colidx_like = alloc i32 x{nnz}")
    e(f"%vals = alloc f64 x{nnz}")
    e(f"%b = alloc f64 x{n}")
    e(f"%x = alloc f64 x{n}")
    e(f"%r_like = alloc f64 x{n}")
    e(f"%p = alloc f64 x{n}")
    e(f"%q = alloc f64 x{n}")

    def spmv(e: Emitter, name: str, src: str, emit_row: Callable):
        """for each row: s = sum vals[k] * src[colidx[k]]; emit_row(row, s)."""
        def row_body(e, row, _):
            e(f"%{name}_pr = gep i32 %rowptr, {row}")
            e(f"%{name}_lo32 = load i32 %{name}_pr")
            e(f"%{name}_row1 = add i64 {row}, 1")
            e(f"%{name}_pr1 = gep i32 %rowptr, %{name}_row1")
            e(f"%{name}_hi32 = load i32 %{name}_pr1")
            e(f"%{name}_lo = sext i32 %{name}_lo32 to i64")
            e(f"%{name}_hi = sext i32 %{name}_hi32 to i64")

            def nz_body(e, k, acc):
                e(f"%{name}_pv = gep f64 %vals, {k}")
                e(f"%{name}_a = load f64 %{name}_pv")
                e(f"%{name}_pci = gep i32 %colidx_like, {k}")
                e(f"%{name}_ci32 = load i32 %{name}_pci", "spmv")
                e(f"%{name}_ci = sext i32 %{name}_ci32 to i64", "spmv")
                e(f"%{name}_px = gep f64 %{src}, %{name}_ci")
                e(f"%{name}_xv = load f64 %{name}_px")
                e(f"%{name}_ax = fmul f64 %{name}_a, %{name}_xv")
                e(f"%{name}_acc2 = fadd f64 {acc[0]}, %{name}_ax")
                return [f"%{name}_acc2"]
            e.loop(f"{name}_k", f"%{name}_lo", f"%{name}_hi", nz_body,
                   carry=[(f"{name}_s", "f64", "0.0")])
            emit_row(e, row, f"%{name}_s")
        e.loop(f"{name}_row", 0, n, row_body)

    def dot(e: Emitter, name: str, u: str, v: str) -> str:
        def body(e, i, acc):
            e(f"%{name}_pu = gep f64 %{u}, {i}")
            e(f"%{name}_u = load f64 %{name}_pu")
            if u == v:
                e(f"%{name}_uv = fmul f64 %{name}_u, %{name}_u")
            else:
                e(f"%{name}_pv = gep f64 %{v}, {i}")
                e(f"%{name}_v = load f64 %{name}_pv")
                e(f"%{name}_uv = fmul f64 %{name}_u, %{name}_v")
            e(f"%{name}_d2 = fadd f64 {acc[0]}, %{name}_uv")
            return [f"%{name}_d2"]
        e.loop(f"{name}_i", 0, n, body, carry=[(f"{name}", "f64", "0.0")])
        return f"%{name}"

    # x = 0, r = b, p = b
    def init(e, i, _):
        e("%pb0 = gep f64 %b, " + i)
        e("%b0 = load f64 %pb0")
        e("%px0 = gep f64 %x, " + i)
        e("store f64 %px0, 0.0")
        e("%pr0 = gep f64 %r_like, " + i)
        e("store f64 %pr0, %b0", "init")
        e("%pp0 = gep f64 %p, " + i)
        e("store f64 %pp0, %b0")
    e.loop("init", 0, n, init)
    bb = dot(e, "bb", "b", "b")
    rho0 = dot(e, "rho0", "r_like", "r_like")
    e(f"%tol2 = fmul f64 {bb}, {_f(stop * stop)}")

    def it_body(e, it, carried):
        rho = carried[0]

        def store_q(e, row, s):
            e(f"%sq = gep f64 %q, {row}")
            e(f"store f64 %sq, {s}")
        spmv(e, "mv", "p", store_q)
        pq = dot(e, "pq", "p", "q")
        e(f"%alpha = fdiv f64 {rho}, {pq}")

        def update(e, i, _):
            e(f"%upp = gep f64 %p, {i}")
            e("%upv = load f64 %upp")
            e(f"%upx = gep f64 %x, {i}")
            e("%uxv = load f64 %upx")
            e("%uap = fmul f64 %alpha, %upv")
            e("%ux2 = fadd f64 %uxv, %uap")
            e("store f64 %upx, %ux2")
            e(f"%upq = gep f64 %q, {i}")
            e("%uqv = load f64 %upq")
            e(f"%upr = gep f64 %r_like, {i}")
            e("%urv = load f64 %upr", "update")
            e("%uaq = fmul f64 %alpha, %uqv")
            e("%ur2 = fsub f64 %urv, %uaq", "update")
            e("store f64 %upr, %ur2", "update")
        e.loop("upd", 0, n, update)
        rho_new = dot(e, "rr", "r_like", "r_like")
        e(f"%beta = fdiv f64 {rho_new}, {rho}")

        def newp(e, i, _):
            e(f"%npr = gep f64 %r_like, {i}")
            e("%nrv = load f64 %npr", "newp")
            e(f"%npp = gep f64 %p, {i}")
            e("%npv = load f64 %npp")
            e("%nbp = fmul f64 %beta, %npv")
            e("%np2 = fadd f64 %nrv, %nbp", "newp")
            e("store f64 %npp, %np2")
        e.loop("np", 0, n, newp)
        return [rho_new]

    def converging(e, carried):
        e(f"%it_go = fcmp ogt f64 {carried[0]}, %tol2")
        return "%it_go"
    e.loop("it", 0, maxit, it_body, carry=[("rho", "f64", rho0)], cond=converging)

    # true residual |b - A x| / |b|
    def resid_row(e, row, s):
        e(f"%tpb = gep f64 %b, {row}")
        e("%tbv = load f64 %tpb")
        e(f"%td = fsub f64 %tbv, {s}")
        e(f"%tpq = gep f64 %q, {row}")
        e("store f64 %tpq, %td")
    spmv(e, "tr", "x", resid_row)
    ss = dot(e, "ss", "q", "q")
    e(f"%nb = call f64 sqrt {bb}")
    e(f"%nr = call f64 sqrt {ss}")
    e("%resid = fdiv f64 %nr, %nb")
    e('call f64 print %resid, "resid"')
    e('call i64 print %it, "iterations"')
    e("ret")
    return e.text(f"cg_lite: conjugate gradient on the {n}x{n} 5-point Laplacian ({g}x{g} grid),\n"
                  f"stop at |r|/|b| <= {stop:g} or {maxit} iterations; prints the true\n"
                  "relative residual |b-Ax|/|b| as \"resid\"")


# ---------------------------------------------------------------------------
# chain_k


def chain_k(length: int = 11) -> str:
    """t[0] feeds ``length`` dependent fadds; the chain end is stored to t[1]
    and then overwritten by a constant before anything reads it."""
    e = Emitter()
    e.input("t", "f64", [1.25, 0.0])
    e.block("entry")
    e("%t = alloc f64 x2")
    e("%out = alloc f64 x1")
    e("%v0 = load f64 %t[0]", "chain")
    for k in range(1, length + 1):
        e(f"%v{k} = fadd f64 %v{k - 1}, {_f(k)}", "chain")
    e(f"store f64 %t[1], %v{length}", "chain")
    e("store f64 %t[1], 0.5", "overwrite")
    e("store f64 %out[0], 2.0")
    e("%o = load f64 %out[0]")
    e('call f64 print %o, "out"')
    e("ret")
    return e.text(f"chain_k: {length} dependent additions ending in an overwritten store")


# ---------------------------------------------------------------------------
# shipped data files


def cg_region(src: str, iteration: int = 1) -> tuple[int, int]:
    """Dynamic-id window covering one outer CG iteration of the golden run."""
    from ..interp import run
    from ..ir import parse_program
    p = parse_program(src)
    _, tr = run(p)
    sid = next(i.static_id for i in p.instructions if i.dest == "it")
    heads = [r.dyn_id for r in tr if r.static_id == sid]
    return heads[iteration], heads[iteration + 1]


def shipped() -> dict[str, tuple[str, str]]:
    """name -> (IR text, config text)."""
    cg = cg_lite()
    lo, hi = cg_region(cg)
    exact = "accept exact\n"
    return {
        "l2norm": (l2norm(), exact + "object sum\n"),
        "mmul": (mmul(2), exact + "object C\n"),
        "mmul4": (mmul(4), exact + "object C\n"),
        "abft_mmul": (abft_mmul(2), exact + "object C\n"),
        "abft_mmul4": (abft_mmul(4), exact + "object C\n"),
        "cg_lite": (cg, f"accept conv:resid:{CG_TAU!r}\nobject r_like\n"
                        f"# second outer iteration of the golden run\nregion {lo} {hi}\n"),
        "chain_k": (chain_k(), exact + "object t\n"),
    }


def main(argv=None) -> int:
    import argparse
    from ..ir import parse_program
    from ..trace import DataObjectMap
    ap = argparse.ArgumentParser(description="regenerate the shipped kernel files")
    ap.add_argument("--out", type=Path, default=DATA)
    args = ap.parse_args(argv)
    args.out.mkdir(parents=True, exist_ok=True)
    for name, (src, cfg) in shipped().items():
        (args.out / f"{name}.arat-ir").write_text(src)
        (args.out / f"{name}.cfg").write_text(cfg)
        omap = DataObjectMap.for_program(parse_program(src))
        (args.out / f"{name}.map").write_text(omap.dumps())
        print(f"wrote {name}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
