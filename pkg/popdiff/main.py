"""🚀 Точка входа: `python -m popdiff <команда> ...`, один JSON-отчёт на строку."""

import argparse
import json
import os
import sys
import time

import numpy as np

from popdiff import __version__
from popdiff.config import build_run_config, load_config, set_guard_limit
from popdiff.core import analysis, counterexample, threept
from popdiff.core.ffalg import FpMatrix, min_poly
from popdiff.core.gridfn import EXACT, FLOAT, GridFunction, GridPoint, full_rank_factor
from popdiff.core.patterns import (
    annihilator_bruteforce,
    check_admissible,
    check_spectral,
    constraint_spaces,
    load_spec,
    reduce_to_identity_form,
)
from popdiff.database.db_connector import get_db
from popdiff.database.save_data import save_log, save_report
from popdiff.errors import InvariantViolation, PopdiffError, UsageError
from popdiff.utils.fnio import fn_read, fn_write
from popdiff.utils.logger import log_error, log_run, setup_logging
from popdiff.utils.reports import build_report, dumps, write_report

DEFAULT_SPEC = "rotated-square"
DEFAULT_GROUP = '{"kind": "Z_N", "N": 101, "M1": 2, "M2": 3}'


class CliParser(argparse.ArgumentParser):
    """argparse, который сообщает об ошибке кодом 1, а не 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# Разбор аргументов
# ---------------------------------------------------------------------------

def _ints(text):
    try:
        return [int(v) for v in str(text).replace(";", ",").split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"ожидался список целых через запятую: {text}") from e


def _vectors(text):
    """"1,0;0,1" → [[1,0],[0,1]]."""
    return [_ints(part) for part in str(text).split(";") if part.strip()]


def _json_or_file(source):
    if os.path.exists(source):
        with open(source, "r", encoding="utf-8") as file:
            return json.load(file)
    try:
        return json.loads(source)
    except json.JSONDecodeError as e:
        raise UsageError(f"{source}: не файл и не JSON") from e


def _function(args, run, spec):
    """Функция из --fn или случайное множество плотности --density на (F_p^n)^k паттерна."""
    if args.fn:
        f = fn_read(args.fn)
        if (f.p, f.k) != (spec.p, spec.k):
            raise UsageError(f"функция над (F_{f.p}^n)^{f.k}, паттерн над F_{spec.p}, k={spec.k}")
        return f
    rng = np.random.default_rng(run.seed)
    return GridFunction.random_set(rng, spec.p, spec.k, args.n, args.density)


def _group_spec(args):
    return threept.FiniteGroupSpec.from_dict(_json_or_file(args.group))


def _random_mask(run, size, density):
    return np.random.default_rng(run.seed).random(size) < density


# ---------------------------------------------------------------------------
# Команды
# ---------------------------------------------------------------------------

def cmd_check(args, run):
    spec = load_spec(args.spec)
    admissible = check_admissible(spec)
    spectral = check_spectral(spec) if spec.M2.is_invertible() else None
    payload = {"spec": spec.to_dict(), "admissible": admissible, "spectral": spectral}
    if spectral is not None:
        payload["min_poly"] = str(min_poly(spec.M1 @ spec.M2.inverse()))
    return payload, True


def cmd_subspaces(args, run):
    spec = reduce_to_identity_form(load_spec(args.spec))
    spaces = constraint_spaces(spec.J)
    payload = spaces.to_dict()
    ok = True
    if args.verify:
        lam = annihilator_bruteforce(spec.J, 1, "symmetric")
        lam_prime = annihilator_bruteforce(spec.J, 2, "skew")
        payload["verified"] = {"Lambda": lam == spaces.Lambda, "LambdaPrime": lam_prime == spaces.LambdaPrime}
        ok = all(payload["verified"].values())
    return payload, ok


def cmd_count(args, run):
    spec = load_spec(args.spec)
    f = _function(args, run, spec)
    entries = _ints(args.d)
    if len(entries) != f.k * f.n:
        raise UsageError(f"--d ожидает {f.k * f.n} чисел (k×n построчно), получено {len(entries)}")
    d = GridPoint.from_matrix(FpMatrix(np.array(entries).reshape(f.k, f.n), f.p))
    beta = analysis.pattern_count(f, spec, d, args.points, run.backend)
    alpha = f.mean() if run.backend == "exact" else float(f.mean())
    return {"d": entries, "beta": beta, "alpha": alpha, "alpha_pow": alpha**args.points, "points": args.points}, True


def cmd_popular(args, run):
    spec = load_spec(args.spec)
    f = _function(args, run, spec)
    report = analysis.popular_search(f, spec, args.eps, args.points, run.backend, args.method)
    return report.to_dict(), True


def cmd_gowers(args, run):
    spec = load_spec(args.spec)
    f = _function(args, run, spec)
    norm = analysis.gowers_norm(f, args.s, args.method)
    return {"s": args.s, "method": args.method, "norm": norm, "mean": f.mean()}, True


def cmd_equidist(args, run):
    spec = reduce_to_identity_form(load_spec(args.spec))
    factor = full_rank_factor(spec.p, args.n, args.d1, args.d2, args.d3)
    if args.kind == "linear-quadratic":
        report = analysis.linear_quadratic_distribution(factor.linear_matrix(), factor.B2, args.n, spec.p)
    elif args.kind == "pattern-tuple":
        report = analysis.pattern_tuple_distribution(factor, spec.J, args.restrict_h)
    else:
        report = analysis.abstract_atom_distribution(factor, spec.k)
    payload = report.to_dict()
    payload["factor"] = factor.to_dict()
    return payload, report.support_ok


def cmd_cex_core(args, run):
    core = counterexample.build_core()
    table = counterexample.core_expectation_table(core)
    diagonal = counterexample.diagonalize_rotated_square()
    strict = table.sup < table.mean**4
    payload = {
        "sup": table.sup,
        "mean": table.mean,
        "strict": strict,
        "table": {str(aa): v for aa, v in table.values.items()},
        "diagonal_form": diagonal.to_dict(),
    }
    return payload, strict


def cmd_cex_eight_tuple(args, run):
    report = counterexample.eight_tuple_distribution(_ints(args.a), _ints(args.b), args.n)
    return report.to_dict(), report.support_ok


def cmd_cex_hypergraph(args, run):
    h = counterexample.Hypergraphon.for_size(args.L)
    payload = counterexample.hypergraph_expectations(h)
    ok = (
        payload["mean_g2"] == payload["mean_expected"]
        and payload["patternA_ok"]
        and payload["patternB_bound_holds"]
        and payload["unique_triangles"]
    )
    return payload, ok


def cmd_cex_dress(args, run):
    core = counterexample.build_core()
    h = counterexample.Hypergraphon.for_size(args.L)
    payload = counterexample.dress_and_measure(core, h, args.n, run.seed, run.seeds, workers=run.workers)
    return payload, True


def cmd_cex_assemble(args, run):
    core = counterexample.build_core()
    h = counterexample.Hypergraphon.for_size(args.L)
    hfun = counterexample.build_dressed(core, h, args.n, run.seed)
    payload, _ = counterexample.final_assembly(hfun, args.gamma, run.seed)
    payload["monte_carlo"] = counterexample.assembly_monte_carlo(
        hfun, args.gamma, run.seed, run.seeds, run.workers, known_means={run.seed: payload["mean_f"]}
    )
    checks = payload["subchecks"]
    return payload, checks["cube_4ap_free"] and checks["log_ratio_ok"]


def cmd_cex_report(args, run):
    params = counterexample.DressingParams(run.seed, args.n, args.L, args.gamma)
    payload = counterexample.cex_report(params, run.seeds, run.workers, run.deterministic)
    return payload, all(payload["certified"].values())


def cmd_threept_bohr(args, run):
    spec = _group_spec(args)
    B = threept.bohr_set(spec.group, _vectors(args.S), args.delta)
    derived = threept.derived_bohr(B, spec)
    payload = {**B.to_dict(), "derived_size": derived.size, "members": B.members.tolist()[: args.limit]}
    return payload, True


def cmd_threept_count(args, run):
    spec = _group_spec(args)
    group = spec.group
    B = threept.bohr_set(group, _vectors(args.S), args.delta)
    f = _random_mask(run, group.size, args.density).astype(np.float64)
    direct = threept.smoothed_3pt_count(f, spec, B, "direct")
    fourier = threept.smoothed_3pt_count(f, spec, B, "fourier")
    gap = abs(direct - fourier)
    payload = {"direct": direct, "fourier": fourier, "gap": gap, "alpha_cubed": float(np.mean(f)) ** 3, "bohr_size": B.size}
    return payload, gap <= 1e-9


def cmd_threept_decompose(args, run):
    spec = _group_spec(args)
    group = spec.group
    f = np.random.default_rng(run.seed).random(group.size)
    S0 = _vectors(args.S) if args.S else ()
    dec = threept.regularity_decompose(f, group, args.eps, args.delta, S0)
    contracts = dec.contracts(f, S0)
    ok = (
        contracts["sum_matches"]
        and contracts["mean_gap"] <= 1e-12
        and contracts["f2_norm"] <= args.eps
        and contracts["f3_fourier_max"] <= dec.gamma2 + 1e-12
        and contracts["S0_in_T"]
    )
    payload = {
        "stages": dec.stages,
        "gamma1": dec.gamma1,
        "gamma2": dec.gamma2,
        "T_size": len(dec.T),
        "bohr": dec.bohr.to_dict(),
        "contracts": contracts,
    }
    return payload, ok


def cmd_threept_search(args, run):
    spec = _group_spec(args)
    mask = _random_mask(run, spec.group.size, args.density)
    report = threept.popular_3pt_search(mask, spec, args.eps)
    return report.to_dict(), True


def cmd_threept_lift(args, run):
    k = args.k
    M1 = _ints(args.M1)
    M2 = _ints(args.M2)
    rng = np.random.default_rng(run.seed)
    mask = rng.random((args.N,) * k) < args.density
    payload = threept.lift_to_interval(mask, args.N, M1, M2, args.eps, k)
    payload["triples"] = payload["triples"][: args.limit]
    return payload, payload["audit_passed"]


def cmd_fnio(args, run):
    if args.action == "write":
        rng = np.random.default_rng(run.seed)
        f = GridFunction.random_set(rng, args.p, args.k, args.n, args.density)
        if args.kind == FLOAT:
            f = f.to_float()
        written = fn_write(args.path, f)
        return {"path": args.path, "bytes": written, "p": f.p, "k": f.k, "n": f.n, "kind": f.value_kind}, True
    f = fn_read(args.path)
    return {"path": args.path, "p": f.p, "k": f.k, "n": f.n, "kind": f.value_kind, "mean": f.mean()}, True


# ---------------------------------------------------------------------------
# Парсер
# ---------------------------------------------------------------------------

def _common_flags():
    common = CliParser(add_help=False)
    common.add_argument("--seed", type=int, help="зерно (по умолчанию из config.yaml)")
    common.add_argument("--seeds", type=int, help="число зёрен Monte Carlo")
    common.add_argument("--guard", dest="guard_limit", type=int, help="предел перебора")
    common.add_argument("--backend", choices=("exact", "float"))
    common.add_argument("--workers", type=int)
    common.add_argument("--json", dest="output", metavar="OUT", help="дописать отчёт в файл вместо stdout")
    common.add_argument("--deterministic", action="store_true", help="без времени выполнения в отчёте")
    common.add_argument("--db", action="store_true", help="сохранить отчёт в базу")
    return common


def _pattern_flags(parser, n=2):
    parser.add_argument("--spec", default=DEFAULT_SPEC, help="JSON-файл или пресет паттерна")
    parser.add_argument("--fn", help="файл функции PLGF")
    parser.add_argument("--n", type=int, default=n)
    parser.add_argument("--density", type=float, default=0.5)


def build_parser():
    common = _common_flags()
    parser = CliParser(prog="popdiff", description="Популярные разности для матричных паттернов")
    parser.add_argument("--version", action="version", version=f"popdiff {__version__}")
    parser.add_argument("--config", help="путь к config.yaml")
    commands = parser.add_subparsers(dest="command", metavar="command")
    commands.required = True

    p = commands.add_parser("check", parents=[common], help="допустимость и спектральное условие")
    p.add_argument("--spec", default=DEFAULT_SPEC)
    p.set_defaults(handler=cmd_check)

    p = commands.add_parser("subspaces", parents=[common], help="Ξ_J, Λ_J, Λ'_J, Ψ_J, Ω_J")
    p.add_argument("--spec", default=DEFAULT_SPEC)
    p.add_argument("--verify", action="store_true", help="сравнить с перебором аннуляторов")
    p.set_defaults(handler=cmd_subspaces)

    p = commands.add_parser("count", parents=[common], help="β(d) для одной разности")
    _pattern_flags(p)
    p.add_argument("--d", required=True, help="элементы D (k×n) через запятую")
    p.add_argument("--points", type=int, choices=(3, 4), default=4)
    p.set_defaults(handler=cmd_count)

    p = commands.add_parser("popular", parents=[common], help="поиск популярной разности")
    _pattern_flags(p)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--points", type=int, choices=(3, 4), default=4)
    p.add_argument("--method", choices=("auto", "dense", "sparse"), default="auto")
    p.set_defaults(handler=cmd_popular)

    p = commands.add_parser("gowers", parents=[common], help="норма Гауэрса U^s")
    _pattern_flags(p, n=1)
    p.add_argument("--s", type=int, default=2)
    p.add_argument("--method", choices=("auto", "direct", "recursive", "fourier"), default="auto")
    p.set_defaults(handler=cmd_gowers)

    p = commands.add_parser("equidist", parents=[common], help="проверка равнораспределения")
    p.add_argument("--spec", default="ap4")
    p.add_argument("--kind", choices=("linear-quadratic", "pattern-tuple", "abstract-atoms"), default="pattern-tuple")
    p.add_argument("--n", type=int, default=3)
    p.add_argument("--d1", type=int, default=1)
    p.add_argument("--d2", type=int, default=1)
    p.add_argument("--d3", type=int, default=0)
    p.add_argument("--restrict-h", action="store_true")
    p.set_defaults(handler=cmd_equidist)

    cex = commands.add_parser("cex", help="контрпример для повёрнутых квадратов")
    actions = cex.add_subparsers(dest="action", metavar="action")
    actions.required = True
    a = actions.add_parser("core", parents=[common])
    a.set_defaults(handler=cmd_cex_core)
    a = actions.add_parser("eight-tuple", parents=[common])
    a.add_argument("--a", default="1,0,0,0")
    a.add_argument("--b", default="0,1,0,0")
    a.add_argument("--n", type=int, default=4)
    a.set_defaults(handler=cmd_cex_eight_tuple)
    a = actions.add_parser("hypergraph", parents=[common])
    a.add_argument("--L", type=int, default=7)
    a.set_defaults(handler=cmd_cex_hypergraph)
    for name, handler in (("dress", cmd_cex_dress), ("assemble", cmd_cex_assemble), ("report", cmd_cex_report)):
        a = actions.add_parser(name, parents=[common])
        a.add_argument("--n", type=int, default=3)
        a.add_argument("--L", type=int, default=5)
        if name != "dress":
            a.add_argument("--gamma", type=int, default=1)
        a.set_defaults(handler=handler)

    three = commands.add_parser("threept", help="трёхточечные паттерны в конечных группах")
    actions = three.add_subparsers(dest="action", metavar="action")
    actions.required = True
    a = actions.add_parser("bohr", parents=[common])
    a.add_argument("--group", default=DEFAULT_GROUP, help="JSON группы или путь к файлу")
    a.add_argument("--S", default="1", help="характеры через ';', координаты через ','")
    a.add_argument("--delta", type=float, default=0.25)
    a.add_argument("--limit", type=int, default=200)
    a.set_defaults(handler=cmd_threept_bohr)
    a = actions.add_parser("count", parents=[common])
    a.add_argument("--group", default=DEFAULT_GROUP)
    a.add_argument("--S", default="1")
    a.add_argument("--delta", type=float, default=0.25)
    a.add_argument("--density", type=float, default=0.5)
    a.set_defaults(handler=cmd_threept_count)
    a = actions.add_parser("decompose", parents=[common])
    a.add_argument("--group", default=DEFAULT_GROUP)
    a.add_argument("--S", default="")
    a.add_argument("--eps", type=float, default=0.5)
    a.add_argument("--delta", type=float, default=0.5)
    a.set_defaults(handler=cmd_threept_decompose)
    a = actions.add_parser("search", parents=[common])
    a.add_argument("--group", default=DEFAULT_GROUP)
    a.add_argument("--eps", type=float, default=0.1)
    a.add_argument("--density", type=float, default=0.5)
    a.set_defaults(handler=cmd_threept_search)
    a = actions.add_parser("lift", parents=[common])
    a.add_argument("--N", type=int, default=30)
    a.add_argument("--k", type=int, default=1)
    a.add_argument("--M1", default="1")
    a.add_argument("--M2", default="2")
    a.add_argument("--eps", type=float, default=0.2)
    a.add_argument("--density", type=float, default=0.5)
    a.add_argument("--limit", type=int, default=50)
    a.set_defaults(handler=cmd_threept_lift)

    p = commands.add_parser("fnio", parents=[common], help="запись и чтение файлов PLGF")
    p.add_argument("action", choices=("write", "read"))
    p.add_argument("path")
    p.add_argument("--p", type=int, default=5)
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--n", type=int, default=2)
    p.add_argument("--density", type=float, default=0.5)
    p.add_argument("--kind", choices=(EXACT, FLOAT), default=EXACT)
    p.set_defaults(handler=cmd_fnio)
    return parser


# ---------------------------------------------------------------------------
# Диспетчер
# ---------------------------------------------------------------------------

def _archive(run, report, exit_code):
    db = next(get_db(run.db_url))
    try:
        save_report(db, run.subcommand, run.seed, run.backend, __version__, dumps(report), exit_code)
        if exit_code:
            save_log(db, "ERROR", f"{run.subcommand}: код выхода {exit_code}")
    finally:
        db.close()


def dispatch(argv=None):
    """Разбирает argv, выполняет команду и возвращает код выхода (0, 1 или 2)."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        sys.stderr.write(f"popdiff: {e}\n")
        return 1
    except SystemExit as e:
        return int(e.code or 0)

    try:
        cfg = load_config(args.config)
        setup_logging(cfg["logging"]["level"], cfg["logging"]["dir"])
        if getattr(args, "action", None):
            args.command = f"{args.command} {args.action}"
        run = build_run_config(args, cfg)
        set_guard_limit(run.guard_limit)
        log_run(f"▶️ {run.subcommand}: seed={run.seed}, backend={run.backend}, guard={run.guard_limit}")

        started = time.perf_counter()
        payload, ok = args.handler(args, run)
        report = build_report(run, payload, time.perf_counter() - started)
        exit_code = 0 if ok else InvariantViolation.exit_code
        write_report(report, run.output)
        if run.db_enabled:
            _archive(run, report, exit_code)
        if not ok:
            log_error(f"🚨 {run.subcommand}: математическая проверка не прошла")
        return exit_code
    except PopdiffError as e:
        log_error(f"❌ {type(e).__name__}: {e}")
        sys.stderr.write(f"popdiff: {type(e).__name__}: {e}\n")
        return e.exit_code
    except OSError as e:
        log_error(f"❌ Ошибка ввода-вывода: {e}")
        sys.stderr.write(f"popdiff: {e}\n")
        return 1


def main():
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
