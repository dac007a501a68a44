"""
Lag profiles of a fitted elastic net: which weeks before harvest carry
non-zero velocity/acceleration coefficients, per variable.
"""
import logging
from pathlib import Path
from typing import Literal

import numpy as np

from app.core.config import settings
from app.core.exceptions import InputValidationError
from app.models import (
    CONTROL_FIELDS,
    EnetModel,
    LagCell,
    LagProfile,
    LagReport,
    Order,
    Variable,
)
from app.services.features import BLOCKS, N_LAGS, check_layout, w_index
from app.storage import atomic_write_text
from app.utils import render_template

logger = logging.getLogger(__name__)

N_CONTROLS = len(CONTROL_FIELDS)

SVG_WIDTH = 480
SVG_HEIGHT = 260
SVG_MARGIN = 40


def lag_report(m: EnetModel, tol: float | None = None) -> LagReport:
    check_layout(m.column_names)
    tol = settings.ACTIVE_LAG_TOL if tol is None else tol
    profiles: list[LagProfile] = []
    for variable, order in BLOCKS:
        cells = []
        for d in range(1, N_LAGS + 1):
            idx = N_CONTROLS + w_index(variable, order, d)
            coef_std = m.beta_std[idx]
            active = abs(coef_std) > tol
            cells.append(
                LagCell(
                    lag=d,
                    coef_std=coef_std,
                    coef_raw=m.beta[idx],
                    active=active,
                    sign=int(np.sign(coef_std)) if active else 0,
                )
            )
        profiles.append(LagProfile(variable=variable, order=order, cells=cells))
    report = LagReport(active_tol=tol, profiles=profiles)
    for p in report.profiles:
        logger.info(
            f"{p.variable.value}/{p.order.value}: active lags "
            f"{active_lags(report, p.variable, p.order)}"
        )
    return report


def active_lags(r: LagReport, variable: Variable, order: Order) -> list[int]:
    return sorted(c.lag for c in r.profile(variable, order).cells if c.active)


def density(r: LagReport, variable: Variable, order: Order) -> float:
    return r.profile(variable, order).density


def w_coefficients(r: LagReport, scale: Literal["raw", "std"] = "raw") -> np.ndarray:
    """The 72 lag coefficients rebuilt in covariate layout order."""
    w = np.zeros(len(BLOCKS) * N_LAGS)
    for p in r.profiles:
        for c in p.cells:
            value = c.coef_raw if scale == "raw" else c.coef_std
            w[w_index(p.variable, p.order, c.lag)] = value
    return w


def _bars(profile: LagProfile) -> tuple[list[dict[str, str | int]], float]:
    values = [c.coef_std for c in profile.cells]
    peak = max((abs(v) for v in values), default=0.0) or 1.0
    plot_w = SVG_WIDTH - 2 * SVG_MARGIN
    half = (SVG_HEIGHT - 2 * SVG_MARGIN) / 2
    baseline = SVG_MARGIN + half
    slot = plot_w / N_LAGS
    bars: list[dict[str, str | int]] = []
    # Lag 1 sits nearest the harvest, on the right
    for c in profile.cells:
        x = SVG_MARGIN + (N_LAGS - c.lag) * slot + 0.15 * slot
        height = abs(c.coef_std) / peak * half
        top = baseline - height if c.coef_std > 0 else baseline
        bars.append(
            {
                "lag": c.lag,
                "x": f"{x:.2f}",
                "y": f"{top:.2f}",
                "width": f"{0.7 * slot:.2f}",
                "height": f"{height:.2f}",
                "center": f"{x + 0.35 * slot:.2f}",
                "fill": "#2b6cb0" if c.active else "#cbd5e0",
                "label": repr(c.coef_std),
            }
        )
    return bars, baseline


def svg_name(variable: Variable, order: Order) -> str:
    return f"lag_{variable.value.lower()}_{order.value}.svg"


def render_svg(r: LagReport, out_dir: Path) -> list[Path]:
    if len(r.profiles) != len(BLOCKS):
        raise InputValidationError(f"report has {len(r.profiles)} profiles, expected 6")
    paths: list[Path] = []
    for profile in r.profiles:
        bars, baseline = _bars(profile)
        svg = render_template(
            template_name="lag_profile.svg.j2",
            context={
                "title": f"{profile.variable.value} {profile.order.value} "
                f"(density {profile.density:.2f})",
                "width": SVG_WIDTH,
                "height": SVG_HEIGHT,
                "left": SVG_MARGIN,
                "right": SVG_MARGIN,
                "baseline": f"{baseline:.2f}",
                "bars": bars,
            },
        )
        paths.append(
            atomic_write_text(out_dir / svg_name(profile.variable, profile.order), svg)
        )
    return paths
