"""
コマンドラインインターフェース

    python -m app.causal_ceo curve --d-grid 0.35:1.0:50 --sigma-w2 1,1
    python -m app.causal_ceo allocate --d 0.5
    python -m app.causal_ceo simulate --d 0.5 --horizon 100000 --format json
    python -m app.causal_ceo bt-eval --spec toy.pmf --alpha 1 --beta 1
    python -m app.causal_ceo selftest --suite rdf-ordering
"""
import argparse
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import model_core, rdf, tracking_sim
from .errors import CeoError, EnumerationLimitError, KernelError, ModelError
from .finite_bt import bound
from .finite_bt.pmf import OBSERVER_RECONSTRUCTION, AUXILIARY
from .finite_bt.pmf_reader import load_pmf
from .i18n import set_language
from .models import (
    CodeParams, CurveMode, ErrorResponse, GridConfig, JointMmseMode, RateUnit, Report, RunConfig,
    SchemeConfig,
)
from .renderers import CsvRenderer, get_renderer
from .selftest import SUITES, run_selftest
from .settings import settings_manager

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_FILE = Path('logs/app.log')
# 下限 s_J にちょうど載る点は解けないので内側に寄せる
GRID_LOWER_MARGIN = 1e-9

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2


def setup_logging(verbose: bool = False, quiet: bool = False) -> None:
    """ログ設定（ファイルと標準エラー）"""
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    LOG_FILE.parent.mkdir(parents=True, exist_ok=True)
    logging.basicConfig(
        level=level,
        format=LOG_FORMAT,
        handlers=[
            logging.FileHandler(LOG_FILE, encoding='utf-8'),
            logging.StreamHandler(sys.stderr),
        ],
    )
    logging.getLogger().setLevel(level)


# ---------------------------------------------------------------------------
# 引数

def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers: {text!r}") from e


def _int_list(text: str) -> List[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as e:
        raise argparse.ArgumentTypeError(f"expected comma separated integers: {text!r}") from e


def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON設定ファイル（コマンドライン引数が優先）")
    common.add_argument("--profile", help="config/ に保存したプロファイル名（--config より先に重ねる）")
    common.add_argument("--save-profile", dest="save_profile", help="解決後の設定をこの名前のプロファイルとして保存")
    common.add_argument("--a", type=float, help="遷移係数 a")
    common.add_argument("--sigma-v2", dest="sigma_v2", type=float, help="プロセス雑音の分散")
    common.add_argument("--sigma-w2", dest="sigma_w2", type=_float_list, help="観測雑音の分散 v1,v2,...")
    common.add_argument("--d", type=float, help="目標歪み")
    common.add_argument("--d-grid", dest="d_grid", help="歪みグリッド min:max:count[:log]")
    common.add_argument("--mode", choices=[m.value for m in CurveMode], help="結合MMSEのモード")
    common.add_argument("--bits", action="store_true", default=None, help="レートをbitsで出力")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int)
    common.add_argument("--out", help="出力ファイル（省略時は標準出力）")
    common.add_argument("--format", choices=["csv", "json", "yaml", "markdown"])
    common.add_argument("--language", choices=["ja", "en"])
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="causal_ceo",
        description="因果的ガウスCEO問題のレート歪み計算・シミュレーション・有限アルファベット界の評価",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("curve", parents=[common], help="歪みグリッド上のレート曲線")
    sub.add_parser("allocate", parents=[common], help="単一の d に対する配分")

    simulate = sub.add_parser("simulate", parents=[common], help="テストチャネル方式のシミュレーション")
    simulate.add_argument("--horizon", type=int, help="試行あたりのステップ数")
    simulate.add_argument("--trials", type=int)
    simulate.add_argument("--trace", help="試行0のトレースCSVの出力先")

    bt = sub.add_parser("bt-eval", parents=[common], help="非漸近Berger-Tung界の評価")
    bt.add_argument("--spec", help="pmfテーブルファイル")
    bt.add_argument("--alpha", type=float)
    bt.add_argument("--beta", type=float)
    bt.add_argument("--perm", type=_int_list, help="観測者の並べ替え 1,2,...")
    bt.add_argument("--n", type=int, help="ブロック長")
    bt.add_argument("--L", type=int)
    bt.add_argument("--M", type=int)
    bt.add_argument("--d-threshold", dest="d_threshold", type=float, help="歪み閾値（全時刻共通）")
    bt.add_argument("--delta", type=float, help="情報量から符号サイズを選ぶときの余裕")
    bt.add_argument("--mc-samples", dest="mc_samples", type=int, help="モンテカルロ標本数（0で無効）")

    selftest = sub.add_parser("selftest", parents=[common], help="組み込みの検証スイート")
    selftest.add_argument("--suite", choices=list(SUITES))
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    """明示された引数だけを設定の上書きにする"""
    values = vars(args)
    overrides: Dict[str, Any] = {
        key: values.get(key)
        for key in ("subcommand", "a", "sigma_v2", "sigma_w2", "d", "mode", "seed", "workers", "out",
                    "format", "language", "horizon", "trials", "trace", "suite")
    }
    if values.get("d_grid") is not None:
        try:
            overrides["d_grid"] = GridConfig.parse(values["d_grid"]).model_dump()
        except ValueError as e:
            raise ModelError(str(e)) from e
    if values.get("bits"):
        overrides["unit"] = RateUnit.BITS.value
    bt = {
        key: values.get(key)
        for key in ("spec", "alpha", "beta", "perm", "n", "L", "M", "d_threshold", "delta", "mc_samples")
    }
    bt = {k: v for k, v in bt.items() if v is not None}
    if bt:
        overrides["bt"] = bt
    return overrides


def _single_mode(cfg: RunConfig) -> JointMmseMode:
    if cfg.mode is CurveMode.BOTH:
        logger.warning("mode 'both' applies to curves only; using riccati")
        return JointMmseMode.RICCATI
    return JointMmseMode(cfg.mode.value)


def _query(cfg: RunConfig, d: float, mode: JointMmseMode):
    return rdf.make_query(cfg.a, cfg.sigma_v2, cfg.sigma_w2, d, mode, cfg.unit)


def _model_parameters(cfg: RunConfig) -> Dict[str, Any]:
    return {
        "a": cfg.a,
        "sigma_v2": cfg.sigma_v2,
        "sigma_w2": list(cfg.sigma_w2),
        "mode": cfg.mode.value,
        "unit": cfg.unit.value,
    }


# ---------------------------------------------------------------------------
# サブコマンド

def _grid_values(grid: GridConfig) -> np.ndarray:
    if grid.log:
        return np.geomspace(grid.min, grid.max, grid.count)
    return np.linspace(grid.min, grid.max, grid.count)


def cmd_curve(cfg: RunConfig) -> Report:
    """歪みグリッド上で全てのレートを評価"""
    modes = [JointMmseMode.RICCATI, JointMmseMode.FUSION] if cfg.mode is CurveMode.BOTH \
        else [JointMmseMode(cfg.mode.value)]
    if cfg.d_grid is not None:
        requested = _grid_values(cfg.d_grid)
    elif cfg.d is not None:
        requested = np.array([cfg.d])
    else:
        raise ModelError("curve needs --d or --d-grid")

    # 実行可能域 (s_J, σ_X²] に収める
    q0 = _query(cfg, float(requested[0]), modes[0])
    ss = model_core.steady_state(q0.model, q0.channels)
    lower = max(model_core.joint_mmse(ss, m) for m in modes) * (1.0 + GRID_LOWER_MARGIN)
    upper = ss.sigma_x2.variance
    warnings: List[str] = []
    clamped_rows: List[Dict[str, Any]] = []
    points: List[float] = []
    for d in requested:
        clamped = float(min(max(d, lower), upper))
        if clamped != d:
            message = f"d={d:.15g} outside the feasible window ({lower:.15g}, {upper:.15g}]; clamped to {clamped:.15g}"
            warnings.append(message)
            logger.warning(message)
            clamped_rows.append({"d": float(d), "mode": modes[0].value, "status": "clamped", "detail": message})
        points.append(clamped)

    queries = [_query(cfg, d, m) for m in modes for d in points]
    with ThreadPoolExecutor(max_workers=cfg.workers) as executor:
        records = list(executor.map(rdf.evaluate_point, queries))

    rows = [
        record.model_dump(by_alias=True, exclude={"a", "sigma_v2", "K", "sigma_w2"}) for record in records
    ]
    rows += clamped_rows
    logger.info(f"curve: {len(records)} points evaluated ({', '.join(m.value for m in modes)})")

    parameters = _model_parameters(cfg)
    parameters["points"] = len(points)
    return Report(
        kind="curve",
        parameters=parameters,
        rows=rows,
        document={"records": rows},
        warnings=warnings,
    )


def cmd_allocate(cfg: RunConfig) -> Report:
    """単一の d に対する CEO 配分と注水配分"""
    if cfg.d is None:
        raise ModelError("allocate needs --d")
    mode = _single_mode(cfg)
    q = _query(cfg, cfg.d, mode)
    ss = model_core.steady_state(q.model, q.channels)

    rows: List[Dict[str, Any]] = []
    document: Dict[str, Any] = {}
    warnings: List[str] = []
    for scheme, solver in (("ceo", rdf.ceo_rdf), ("waterfilling", rdf.waterfilling)):
        rate, alloc = solver(q)
        alloc = rdf.allocation_conversions(alloc, ss)
        sigma_z2 = [tracking_sim.sigma_z_from_dk(ss, k, d_k) for k, d_k in enumerate(alloc.d_k)]
        alloc = alloc.model_copy(update={"sigma_z2": sigma_z2})
        warnings += [f"{scheme}: {w}" for w in alloc.warnings]
        for k in range(alloc.K):
            rows.append({
                "scheme": scheme,
                "channel": k + 1,
                "sigma_w2": cfg.sigma_w2[k],
                "s_k": ss.s[k],
                "d_k": alloc.d_k[k],
                "rho_k": alloc.rho_k[k],
                "rho_bar_k": alloc.rho_bar_k[k],
                "sigma_z2": sigma_z2[k],
                "active": alloc.active[k],
                "rate_term": rdf.unit_convert(alloc.rate_terms[k], cfg.unit),
                "lambda": alloc.water_level,
                "total_rate": rate,
            })
        document[scheme] = {"rate": rate, "allocation": alloc}
        logger.info(f"allocate {scheme}: rate={rate:.10g} {cfg.unit.value}")

    parameters = _model_parameters(cfg)
    parameters.update({"d": cfg.d, "mode": mode.value, "s_joint": model_core.joint_mmse(ss, mode)})
    return Report(kind="allocate", parameters=parameters, rows=rows, document=document, warnings=warnings)


def cmd_simulate(cfg: RunConfig) -> Tuple[Report, List[Dict[str, float]], bool]:
    """テストチャネル方式のシミュレーション（戻り値の bool は 4SE 以内か）"""
    if cfg.d is None:
        raise ModelError("simulate needs --d")
    mode = _single_mode(cfg)
    q = _query(cfg, cfg.d, mode)
    _, alloc = rdf.ceo_rdf(q)
    scheme = SchemeConfig(
        model=q.model, channels=q.channels, allocation=alloc, horizon=cfg.horizon, seed=cfg.seed,
        trials=cfg.trials, workers=cfg.workers, trace=cfg.trace is not None, mode=mode,
    )
    report, trace = tracking_sim.run_simulation(scheme)

    row = report.model_dump(exclude={"warnings"})
    parameters = _model_parameters(cfg)
    parameters.update({"d": cfg.d, "mode": mode.value, "horizon": cfg.horizon, "trials": cfg.trials,
                       "seed": cfg.seed})
    agreed = report.within_ci is not False
    if not agreed:
        logger.error(
            f"empirical MSE {report.achieved_mse_empirical} disagrees with exact {report.achieved_mse_exact} "
            f"beyond {tracking_sim.CI_WIDTH} SE"
        )
    return (
        Report(kind="simulate", parameters=parameters, rows=[row], document={"report": report},
               warnings=list(report.warnings)),
        trace,
        agreed,
    )


def _bt_params(cfg: RunConfig, joint, distortion) -> Tuple[CodeParams, Optional[Dict[str, Any]], List[str]]:
    bt = cfg.bt
    pi = bt.perm or list(range(1, joint.K + 1))
    d_thresholds = [bt.d_threshold] * joint.t
    if bt.delta is not None:
        sizes = bound.select_code_sizes(joint, bt.delta, bt.n, pi)
        params = bound.code_params_from_sizes(sizes, d_thresholds, pi, distortion)
        sizes_doc, warnings = sizes.model_dump(), list(sizes.warnings)
    else:
        params = CodeParams.uniform(
            t=joint.t, K=joint.K, L=bt.L, M=bt.M, alpha=bt.alpha, beta=bt.beta, d=bt.d_threshold,
            n=bt.n, pi=pi, distortion=distortion,
        )
        sizes_doc, warnings = None, []
    if joint.has(OBSERVER_RECONSTRUCTION):
        # 分散情報源符号化：観測者毎に Y と Ŷ を比べる
        params = params.model_copy(update={
            "observer_thresholds": [[bt.d_threshold] * joint.K for _ in range(joint.t)],
        })
    return params, sizes_doc, warnings


def cmd_bt_eval(cfg: RunConfig) -> Report:
    """pmfファイルから非漸近界を評価"""
    if not cfg.bt.spec:
        raise ModelError("bt-eval needs --spec FILE")
    spec = load_pmf(cfg.bt.spec)
    joint = spec.joint
    params, sizes_doc, warnings = _bt_params(cfg, joint, spec.distortion)

    try:
        result = bound.evaluate_bt_bound(joint, params)
    except EnumerationLimitError as e:
        if not cfg.bt.mc_samples:
            raise
        logger.warning(f"{e}; falling back to Monte Carlo")
        result = None
    if cfg.bt.mc_samples:
        mc = bound.monte_carlo_event_probability(joint, params, cfg.bt.mc_samples, cfg.seed, cfg.workers)
        if result is None:
            result = mc
        else:
            result = result.model_copy(update={
                "prob_E_monte_carlo": mc.prob_E_monte_carlo,
                "monte_carlo_se": mc.monte_carlo_se,
                "monte_carlo_samples": mc.monte_carlo_samples,
            })
    warnings += list(result.warnings)

    document: Dict[str, Any] = {"bound": result}
    if sizes_doc is not None:
        document["code_sizes"] = sizes_doc
    if joint.has(AUXILIARY):
        try:
            document["rates"] = bound.achievable_rates(joint, params.pi)
        except KernelError as e:
            warnings.append(f"achievable rates skipped: {e}")
            logger.warning(warnings[-1])

    rows: List[Dict[str, Any]] = [
        {"quantity": "prob_E", "value": result.prob_E},
        {"quantity": "gamma", "value": result.gamma},
        {"quantity": "epsilon_bound", "value": result.epsilon_bound},
        {"quantity": "sharp_success", "value": result.sharp_success},
    ]
    rows += [{"quantity": f"event_{name}", "value": p} for name, p in result.event_breakdown.items()]
    if result.prob_E_monte_carlo is not None:
        rows += [
            {"quantity": "prob_E_monte_carlo", "value": result.prob_E_monte_carlo},
            {"quantity": "monte_carlo_se", "value": result.monte_carlo_se},
        ]
    parameters = {
        "spec": cfg.bt.spec, "t": joint.t, "K": joint.K, "n": params.n, "pi": params.pi,
        "alpha": cfg.bt.alpha, "beta": cfg.bt.beta, "d_threshold": cfg.bt.d_threshold,
    }
    return Report(kind="bt-eval", parameters=parameters, rows=rows, document=document, warnings=warnings)


def cmd_selftest(cfg: RunConfig) -> Tuple[Report, bool]:
    """検証スイートを実行"""
    results = run_selftest(cfg.seed, cfg.suite)
    rows = [
        {"suite": r.name, "passed": r.passed, "failed": r.failed, "status": "ok" if r.ok else "failed"}
        for r in results
    ]
    failures = [f"{r.name}: {f}" for r in results for f in r.failures]
    ok = all(r.ok for r in results)
    parameters = {"seed": cfg.seed, "suite": cfg.suite or "all"}
    return Report(kind="selftest", parameters=parameters, rows=rows, document={"suites": results},
                  warnings=failures), ok


# ---------------------------------------------------------------------------
# 出力

def write_output(content: str, out: Optional[str]) -> None:
    """ファイル（指定時）または標準出力へ書き出し"""
    if out is None:
        sys.stdout.write(content)
        return
    path = Path(out)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(content, encoding='utf-8')
    logger.info(f"wrote {path}")


def _emit(cfg: RunConfig, report: Report) -> None:
    files = get_renderer(cfg).render(report)
    for content in files.values():
        write_output(content, cfg.out)


def _error_response(e: Exception) -> None:
    response = ErrorResponse(error=type(e).__name__, detail=str(e))
    sys.stdout.write(json.dumps(response.model_dump(), indent=2, ensure_ascii=False) + "\n")


def run(cfg: RunConfig) -> int:
    """設定済みのサブコマンドを実行して終了コードを返す"""
    set_language(cfg.language)
    code = EXIT_OK
    if cfg.subcommand == "curve":
        report = cmd_curve(cfg)
    elif cfg.subcommand == "allocate":
        report = cmd_allocate(cfg)
    elif cfg.subcommand == "simulate":
        report, trace, agreed = cmd_simulate(cfg)
        if cfg.trace is not None:
            write_output(CsvRenderer(cfg).render_trace(trace)["trace.csv"], cfg.trace)
        if not agreed:
            code = EXIT_CHECK_FAILED
    elif cfg.subcommand == "bt-eval":
        report = cmd_bt_eval(cfg)
    elif cfg.subcommand == "selftest":
        report, ok = cmd_selftest(cfg)
        if not ok:
            code = EXIT_CHECK_FAILED
    else:
        raise ModelError(f"unknown subcommand {cfg.subcommand!r}")
    _emit(cfg, report)
    return code


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    setup_logging(args.verbose, args.quiet)
    try:
        cfg = settings_manager.resolve(args.config, _overrides(args), profile=args.profile)
        if args.save_profile:
            settings_manager.save_settings(cfg, args.save_profile)
        logger.info(f"running {cfg.subcommand}")
        code = run(cfg)
    except CeoError as e:
        logger.error(f"{type(e).__name__}: {e}")
        _error_response(e)
        return EXIT_ERROR
    if code != EXIT_OK:
        logger.error(f"{args.subcommand} finished with exit code {code}")
    return code
